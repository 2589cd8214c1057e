"""Frozen reference values.

Analytic values are derived by hand; regression values were recorded from
the first run of the default scenario and are frozen here.
"""
import numpy as np

# dim U0, dim U1, rank for sun_son(n): n(n-1)/2, n(n+1)/2 - 1, n - 1
SUN_SON_DIMS = {2: (1, 2, 1), 3: (3, 5, 2), 4: (6, 9, 3)}

# Cartan characters along the canonical flag and the codimension c(F)
CHARACTERS = {2: [1, 1], 3: [3, 3, 0], 4: [6, 6, 0, 0]}
C_F = {2: 1, 3: 9, 4: 30}

# degenerate flag [i diag(1,1,-2), i diag(1,-1,0)] in sun_son(3)
DEGENERATE = {"c_F": 8, "codim": 9}

# default loop: seed pole 1+i mirrored to -1-i and 1-i (f), inverse poles conjugate
DEFAULT_POLES = [-1 - 1j, 1 - 1j]
DEFAULT_INV_POLES = [1 + 1j, -1 + 1j]

# regression: v of the default scenario (65x65 on [-1.6, 1.6]^2)
V_NORM = 2.939684806804864
V_AT_10_50 = np.array([
    [0, -0.02945044j, -0.22853908j],
    [-0.02945044j, 0, 0.67906442j],
    [-0.22853908j, 0.67906442j, 0],
])
V_TOL = 5e-8
