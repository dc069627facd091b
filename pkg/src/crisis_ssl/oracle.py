"""Pseudo-label sources: trained teacher, remote LLM endpoint, and simulator.

All three emit the same PseudoLabel record so training strategies are
oracle-agnostic. Remote annotation goes through an append-only response cache
keyed by (model id, prompt digest, text digest) and never re-queries a cached
triple.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .corpus import LabelSchema
from .featurizer import fnv1a_64
from .model import ClassifierParams, predict_proba

# Working definitions for the humanitarian categories, used to fill the
# {definitions} slot of the default prompt.
CATEGORY_DEFINITIONS = {
    "Caution and advice": "warnings, preparedness guidance, or safety advice",
    "Sympathy and support": "thoughts, prayers, or emotional support for those affected",
    "Requests or urgent needs": "requests for help, supplies, money, or other urgent needs",
    "Displaced people and evacuations": "people evacuating, relocating, or displaced from home",
    "Injured or dead people": "reports of people injured or killed",
    "Missing or found people": "reports of people missing, trapped, or found",
    "Infrastructure and utility damage": "damage to buildings, roads, power, water, or other utilities",
    "Rescue, volunteering, or donation effort": "rescue operations, volunteering, or donations of goods or money",
    "Other relevant information": "other information useful for humanitarian response",
    "Not humanitarian": "unrelated to the humanitarian impact of the event",
}

DEFAULT_PROMPT_TEMPLATE = """You are classifying social media posts written during a disaster event.
Assign the post to exactly one of these categories:

{definitions}

Answer with the category name only, nothing else.

Post: {text}"""


class AnnotationAuthError(RuntimeError):
    """The remote endpoint rejected our credentials; the run must stop."""


@dataclass(frozen=True)
class PseudoLabel:
    """A label assignment with its provenance.

    Exactly one of (valid label index, out_of_schema) holds; OOS labels are
    dropped by every training strategy.
    """

    example_id: str
    label: int | None
    confidence: float
    source: str  # "teacher" | "remote" | "simulated"
    out_of_schema: bool = False
    raw_response: str | None = None

    def __post_init__(self):
        if (self.label is None) != self.out_of_schema:
            raise ValueError("label must be None exactly when out_of_schema is set")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        if self.source not in ("teacher", "remote", "simulated"):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class OracleProfile:
    """Per-class accuracy profile driving the simulated annotator."""

    per_class_accuracy: tuple
    seed: int = 0

    def __post_init__(self):
        acc = tuple(float(a) for a in self.per_class_accuracy)
        if not acc or any(a < 0 or a > 1 for a in acc):
            raise ValueError("per-class accuracies must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        object.__setattr__(self, "per_class_accuracy", acc)

    @property
    def size(self) -> int:
        return len(self.per_class_accuracy)


# Observed zero-shot per-class quality pattern of a strong remote annotator on
# the 10-category schema, in schema order. Concrete, visually groundable
# categories (injuries, rescue) score high; catch-all ones score low.
DEFAULT_PER_CLASS_ACCURACY = (
    0.634,  # Caution and advice
    0.739,  # Sympathy and support
    0.526,  # Requests or urgent needs
    0.766,  # Displaced people and evacuations
    0.885,  # Injured or dead people
    0.698,  # Missing or found people
    0.704,  # Infrastructure and utility damage
    0.827,  # Rescue, volunteering, or donation effort
    0.276,  # Other relevant information
    0.569,  # Not humanitarian
)


def default_oracle_profile(seed: int = 0) -> OracleProfile:
    return OracleProfile(DEFAULT_PER_CLASS_ACCURACY, seed)


def uniform_oracle_profile(accuracy: float, n_classes: int, seed: int = 0) -> OracleProfile:
    return OracleProfile((accuracy,) * n_classes, seed)


def annotate_teacher(params: ClassifierParams, X, ids) -> list[PseudoLabel]:
    """Argmax labels from a trained classifier; confidence is the max prob.

    Ties break toward the lowest class index (argmax convention).
    """
    probs = predict_proba(params, X)
    labels = probs.argmax(axis=1)
    conf = probs.max(axis=1)
    return [
        PseudoLabel(str(ex_id), int(l), min(float(c), 1.0), "teacher")
        for ex_id, l, c in zip(ids, labels, conf)
    ]


def annotate_simulated(ids, golds, profile: OracleProfile) -> list[PseudoLabel]:
    """Emit the gold label with the profiled per-class probability.

    Misses are uniform over the other classes. Each example's draw is seeded
    by (profile.seed, example id), so results do not depend on batch order or
    composition.
    """
    out = []
    n_classes = profile.size
    for ex_id, gold in zip(ids, golds):
        gold = int(gold)
        if gold < 0 or gold >= n_classes:
            raise ValueError(f"gold label {gold} outside profile of size {n_classes}")
        rng = np.random.default_rng(
            np.random.SeedSequence([profile.seed, fnv1a_64(str(ex_id).encode("utf-8"))]))
        if rng.random() < profile.per_class_accuracy[gold]:
            label = gold
        else:
            off = int(rng.integers(0, n_classes - 1))
            label = off + (off >= gold)
        out.append(PseudoLabel(str(ex_id), label, 1.0, "simulated"))
    return out


@dataclass(frozen=True)
class AnnotationRequest:
    """One remote annotation job: endpoint, model, prompt, and texts."""

    endpoint: str
    model_id: str
    batch: tuple  # of (id, text) pairs
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    max_retries: int = 3
    rate_limit_per_s: float = 4.0
    timeout_s: float = 30.0
    backoff_base_s: float = 0.5
    token_env: str = "ANNOTATION_API_TOKEN"

    def __post_init__(self):
        object.__setattr__(self, "batch", tuple((str(i), str(t)) for i, t in self.batch))
        if not self.batch:
            raise ValueError("batch must be non-empty")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.rate_limit_per_s <= 0:
            raise ValueError("rate_limit_per_s must be > 0")


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class AnnotationCache:
    """Append-only JSONL response store; the last write for a key wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._index: dict[tuple, str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                        key = (rec["model"], rec["prompt_digest"], rec["text_digest"])
                        self._index[key] = rec["response"]
                    except (ValueError, KeyError, TypeError):
                        warnings.warn(f"{self.path}:{lineno}: skipping corrupt cache line")

    @staticmethod
    def make_key(model_id: str, prompt: str, text: str) -> tuple:
        return (model_id, _digest(prompt), _digest(text))

    def get(self, key: tuple) -> str | None:
        return self._index.get(key)

    def put(self, key: tuple, response: str) -> None:
        rec = {
            "model": key[0],
            "prompt_digest": key[1],
            "text_digest": key[2],
            "response": response,
            "timestamp": time.time(),
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")
        self._index[key] = response

    def __len__(self) -> int:
        return len(self._index)


def render_definitions(schema: LabelSchema) -> str:
    lines = []
    for i, name in enumerate(schema.categories, start=1):
        gloss = CATEGORY_DEFINITIONS.get(name)
        lines.append(f"{i}. {name}" + (f": {gloss}" if gloss else ""))
    return "\n".join(lines)


def annotate_remote(request: AnnotationRequest, schema: LabelSchema,
                    cache: AnnotationCache, session=None) -> list[PseudoLabel]:
    """Chat-completion annotation with caching, rate limiting, and backoff.

    Every uncached text costs exactly one successful request; responses are
    cached before return. Replies are matched case-insensitively (after
    whitespace trimming) against the schema; anything else is flagged OOS.
    Transport failures that survive the retry budget are recorded per item
    and the run continues; authentication failures abort.
    """
    session = session or requests.Session()
    template = request.prompt_template.format(
        definitions=render_definitions(schema), text="{text}")
    token = os.environ.get(request.token_env, "")
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    min_interval = 1.0 / request.rate_limit_per_s
    last_sent = [0.0]

    def post_once(prompt: str):
        wait = last_sent[0] + min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        last_sent[0] = time.monotonic()
        return session.post(
            request.endpoint,
            json={
                "model": request.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            },
            headers=headers,
            timeout=request.timeout_s,
        )

    def call_with_retry(prompt: str) -> tuple[str | None, str | None]:
        last_error = "unknown"
        for attempt in range(request.max_retries + 1):
            if attempt:
                time.sleep(request.backoff_base_s * 2 ** (attempt - 1))
            try:
                resp = post_once(prompt)
            except requests.RequestException as exc:
                last_error = f"transport: {exc}"
                continue
            if resp.status_code in (401, 403):
                raise AnnotationAuthError(f"endpoint returned {resp.status_code}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"status {resp.status_code}"
                continue
            if resp.status_code != 200:
                return None, f"status {resp.status_code}"  # permanent, no retry
            try:
                return resp.json()["choices"][0]["message"]["content"], None
            except (ValueError, KeyError, IndexError) as exc:
                return None, f"bad response shape: {exc}"
        return None, last_error

    out = []
    for ex_id, text in request.batch:
        key = cache.make_key(request.model_id, template, text)
        content = cache.get(key)
        if content is None:
            content, error = call_with_retry(template.format(text=text))
            if content is None:
                warnings.warn(f"annotation failed for {ex_id!r}: {error}")
                out.append(PseudoLabel(ex_id, None, 1.0, "remote", True,
                                       f"<error: {error}>"))
                continue
            cache.put(key, content)
        idx = schema.match(content)
        out.append(PseudoLabel(ex_id, idx, 1.0, "remote", idx is None, content))
    return out
