# Reference values for tests/test_metrics.cpp, using scikit-image CIEDE2000.
import itertools
import math

import numpy as np
from skimage.color import deltaE_ciede2000


def palette(k):
    return [[40 + 10 * math.sin(0.7 * k + i), 60 * math.cos(1.3 * k + 0.5 * i), 50 * math.sin(0.9 * k - 0.8 * i)]
            for i in range(5)]


def de(a, b):
    return float(deltaE_ciede2000(np.array(a), np.array(b)))


pals = [palette(k) for k in range(4)]
for k, p in enumerate(pals):
    print(f"diversity[{k}] = {np.mean([de(a, b) for a, b in itertools.combinations(p, 2)])!r}")
mm = np.mean([np.mean([min(de(c, d) for d in q) for c in p])
              for p, q in itertools.permutations(pals, 2)])
print(f"multimodality = {mm!r}")
