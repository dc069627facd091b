"""Published HumAID benchmark statistics used as the bit-exact split oracle.

Per event: the train-split class histogram (10 positions, schema order; zeros
mark inactive classes) and the expected (n_labeled, n_unlabeled) pair for
every labels-per-class budget.
"""

BUDGETS = (5, 10, 25, 50)

EVENTS = {
    "california_wildfires_2018": {
        "class_counts": (97, 330, 55, 258, 1362, 125, 295, 991, 727, 923),
        "splits": {5: (50, 5113), 10: (100, 5063), 25: (250, 4913), 50: (500, 4663)},
    },
    "canada_wildfires_2016": {
        "class_counts": (74, 113, 14, 266, 0, 0, 176, 653, 218, 55),
        "splits": {5: (40, 1529), 10: (80, 1489), 25: (189, 1380), 50: (364, 1205)},
    },
    "cyclone_idai_2019": {
        "class_counts": (62, 338, 100, 40, 303, 13, 248, 1308, 285, 56),
        "splits": {5: (50, 2703), 10: (100, 2653), 25: (238, 2515), 50: (453, 2300)},
    },
    "hurricane_dorian_2019": {
        "class_counts": (958, 758, 125, 561, 42, 0, 571, 691, 1011, 612),
        "splits": {5: (45, 5284), 10: (90, 5239), 25: (225, 5104), 50: (442, 4887)},
    },
    "hurricane_florence_2018": {
        "class_counts": (917, 330, 38, 446, 208, 0, 224, 1034, 445, 742),
        "splits": {5: (45, 4339), 10: (90, 4294), 25: (225, 4159), 50: (438, 3946)},
    },
    "hurricane_harvey_2017": {
        "class_counts": (379, 444, 233, 482, 488, 0, 852, 1976, 1237, 287),
        "splits": {5: (45, 6333), 10: (90, 6288), 25: (225, 6153), 50: (450, 5928)},
    },
    "hurricane_irma_2017": {
        "class_counts": (429, 397, 88, 528, 626, 0, 1317, 1113, 1651, 430),
        "splits": {5: (45, 6534), 10: (90, 6489), 25: (225, 6354), 50: (450, 6129)},
    },
    "hurricane_maria_2017": {
        "class_counts": (154, 470, 498, 92, 211, 0, 999, 1384, 1097, 189),
        "splits": {5: (45, 5049), 10: (90, 5004), 25: (225, 4869), 50: (450, 4644)},
    },
    "kaikoura_earthquake_2016": {
        "class_counts": (345, 302, 17, 61, 73, 0, 218, 145, 218, 157),
        "splits": {5: (45, 1491), 10: (90, 1446), 25: (217, 1319), 50: (417, 1119)},
    },
    "kerala_floods_2018": {
        "class_counts": (97, 585, 413, 39, 254, 0, 207, 3005, 669, 319),
        "splits": {5: (45, 5543), 10: (90, 5498), 25: (225, 5363), 50: (439, 5149)},
    },
}
