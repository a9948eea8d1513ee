"""CSV writing with deterministic float formatting.

Floats are rendered with repr (shortest round-trip form), so rerunning an
experiment with the same seeds reproduces output files byte for byte; no
wall-clock or host-dependent values belong in these files.
"""

from __future__ import annotations

from pathlib import Path

LAM_METRICS_HEADER = ("step", "l_recon", "l_ad", "l_vq", "l_total")
POLICY_METRICS_HEADER = ("step", "loss")
EVAL_EPISODES_HEADER = ("episode", "seed", "success", "steps_to_success")
REPORT_HEADER = ("method", "seed", "episodes", "success_rate", "mean_steps")
STUDY_HEADER = ("study", "level", "seed", "success_rate", "mean_steps")
STUDY_SUMMARY_HEADER = ("study", "level", "mean_success", "sd_success", "n_seeds")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "nan"
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(row[k]) for k in header))
    Path(path).write_text("\n".join(lines) + "\n")
