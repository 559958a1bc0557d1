#!/usr/bin/env python3
"""Print the translation/rotation variance schedules on a coarse grid.

Writes the same columns as `se3diffuse schedule` to stdout; pipe to a
file for plotting.
"""

import numpy as np

from se3diffuse import schedules

ts = schedules.TranslationSchedule()
rs_log = schedules.RotationSchedule()
rs_lin = schedules.RotationSchedule(kind="linear")

print("s,beta,trans_var,rot_var_logarithmic,rot_var_linear,g_r")
for s in np.linspace(0.0, 1.0, 21):
    print(
        f"{s:.2f},{schedules.beta(s, ts):.6g},"
        f"{1.0 - np.exp(-schedules.G_x(s, ts)):.6g},"
        f"{schedules.rot_variance(s, rs_log):.6g},"
        f"{schedules.rot_variance(s, rs_lin):.6g},"
        f"{schedules.g_r(s, rs_log):.6g}"
    )
