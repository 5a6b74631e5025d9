"""
Experiment campaigns behind ``fairslot sweep``.

Each trial gets its own seed spawned from the campaign seed, trials run in
parallel with joblib, and rows are sorted before writing so the CSV is
byte-identical for a fixed spec regardless of worker count.
"""

import io
import json
import logging
from itertools import product
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import get_settings
from .core import Family, MechanismConfig
from .fairness_audit import audit_pair
from .oracles import pair_generator, random_instance
from .schemas import SweepSpec
from .welfare import ipa_bound, ipa_tight_instance, ipa_tight_ratio, welfare_result

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

COLUMNS: Dict[str, List[str]] = {
    "welfare": ["n", "k", "ell", "family", "trial", "alg", "opt", "ratio", "bound", "applicable"],
    "tightness": ["n", "k", "ell", "family", "trial", "alg", "opt", "ratio", "bound", "closed_form"],
    "stability": [
        "n", "k", "ell", "family", "trial", "lambda_effective", "lambda_values",
        "weak_measured", "weak_bound", "ordered_measured", "ordered_bound",
        "tv_measured", "tv_bound", "hetero_measured", "hetero_bound", "satisfied",
    ],
}
SORT_KEYS = ["n", "k", "ell", "family", "trial"]
GUARANTEED = {
    Family.IPA: ("weak", "ordered", "hetero"),
    Family.PA: ("weak", "ordered", "tv", "hetero"),
}


def _welfare_trial(task: dict) -> dict:
    rng = np.random.default_rng(task["seed"])
    inst = random_instance(rng, task["n"], task["k"])
    config = MechanismConfig(task["family"], task["ell"])
    result = welfare_result(inst, config)
    return {**_keys(task), **result.to_dict()}


def _tightness_trial(task: dict) -> dict:
    inst = ipa_tight_instance(task["k"], task["n"], task["eps"])
    result = welfare_result(inst, MechanismConfig(Family.IPA, 1.0))
    return {
        **_keys(task),
        "alg": result.alg,
        "opt": result.opt,
        "ratio": result.ratio,
        "bound": ipa_bound(1.0),
        "closed_form": ipa_tight_ratio(task["k"], task["n"], task["eps"]),
    }


def _stability_trial(task: dict) -> dict:
    inst_a, inst_b = pair_generator(task["seed"], task["n"], task["k"], task["lambda_max"], task["strategy"])
    config = MechanismConfig(task["family"], task["ell"])
    # total variation is only guaranteed for PA; IPA rows leave it empty
    definitions = GUARANTEED[config.family]
    report = audit_pair(inst_a, inst_b, config, definitions)
    row = {
        **_keys(task),
        "lambda_effective": report.lambda_effective,
        "lambda_values": report.lambda_values,
        "satisfied": report.satisfied,
    }
    for metric in ("weak", "ordered", "tv", "hetero"):
        records = [r for r in report.records if r.metric == metric]
        row[f"{metric}_measured"] = max((r.measured for r in records), default=float("nan"))
        row[f"{metric}_bound"] = records[0].bound if records else float("nan")
    return row


TRIALS = {"welfare": _welfare_trial, "tightness": _tightness_trial, "stability": _stability_trial}


def _keys(task: dict) -> dict:
    return {
        "n": task["n"],
        "k": task["k"],
        "ell": task["ell"],
        "family": Family(task["family"]).value,
        "trial": task["trial"],
    }


def build_tasks(spec: SweepSpec) -> List[dict]:
    if spec.trials == 0:
        return []
    if spec.kind == "tightness":
        grid = [(n, k, 1.0, Family.IPA.value) for n, k in product(spec.n, spec.k) if n > 2 * k]
        trials = 1
    else:
        grid = [
            (n, k, float(ell), Family(f).value)
            for n, k, ell, f in product(spec.n, spec.k, spec.ell, spec.family)
            if k <= n
        ]
        trials = spec.trials
    seeds = np.random.SeedSequence(spec.seed).spawn(len(grid) * trials)
    tasks = []
    for idx, ((n, k, ell, family), trial) in enumerate(product(grid, range(trials))):
        tasks.append(
            {
                "n": n,
                "k": k,
                "ell": ell,
                "family": family,
                "trial": trial,
                "seed": int(seeds[idx].generate_state(1)[0]),
                "eps": spec.eps,
                "lambda_max": spec.lambda_max,
                "strategy": spec.strategy,
            }
        )
    return tasks


def run_sweep(spec: SweepSpec, threads: Optional[int] = None) -> pd.DataFrame:
    """Run every trial of ``spec`` and return the rows in a stable order."""
    threads = threads or get_settings().threads
    tasks = build_tasks(spec)
    fn = TRIALS[spec.kind]
    logger.info("sweep %s: %d trials on %d workers", spec.kind, len(tasks), threads)
    rows = Parallel(n_jobs=threads)(delayed(fn)(task) for task in tasks) if tasks else []
    frame = pd.DataFrame(rows, columns=COLUMNS[spec.kind])
    if len(frame):
        frame = frame.sort_values(SORT_KEYS, kind="mergesort").reset_index(drop=True)
    return frame


def config_header(spec: SweepSpec) -> str:
    return "# config " + json.dumps(spec.model_dump(mode="json"), sort_keys=True)


def to_csv(frame: pd.DataFrame, header: Optional[str] = None) -> str:
    """CSV text with 17 significant digits, preceded by an optional comment line."""
    buffer = io.StringIO()
    if header:
        buffer.write(header + "\n")
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def sweep_csv(spec: SweepSpec, threads: Optional[int] = None) -> str:
    return to_csv(run_sweep(spec, threads), config_header(spec))
