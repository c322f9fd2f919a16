"""
Utility functions for sweep statistics, theory comparison and output files
"""

import json
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ctmc_engine import DISCONNECTION, EVENT_COUNT_KEYS, TransitionRecord


class DataError(ValueError):
    """Sweep data unusable for the requested statistic"""


@dataclass
class ExponentFit:
    """Container for a log-log scaling fit"""
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int

    @property
    def ci(self) -> Tuple[float, float]:
        return self.ci_low, self.ci_high

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low

    def to_dict(self) -> Dict:
        return {'slope': self.slope, 'intercept': self.intercept,
                'ci': [self.ci_low, self.ci_high], 'points': self.points}


REPLICATION_COLUMNS = [
    'r', 'r_index', 'replication', 'seed', 'completed', 'transition_time',
    'first_activation_time', 'first_cause', 'first_dynamics_assisted', 'path',
    'n_disconnection', 'n_nucleation', 'n_v_deactivations', 'residual_active_u',
] + [f"events_{key}" for key in EVENT_COUNT_KEYS]

SUMMARY_COLUMNS = [
    'r', 'replications', 'completed', 'timeouts', 'mean_T', 'std_error', 'ci95_low',
    'ci95_high', 'median_T', 'TU', 'frac_below_TU', 'disconnection_fraction',
    'assisted_fraction', 'nucleation_fraction', 'mean_first_activation',
]


# =============================================================================
# ROWS AND SUMMARIES
# =============================================================================

def record_row(record: TransitionRecord, r: float, r_index: int, replication: int) -> Dict:
    """One replications.csv row"""
    first = record.first_activation
    firsts = [entry for entry in record.v_activation if entry is not None]
    row = {
        'r': r,
        'r_index': r_index,
        'replication': replication,
        'seed': record.seed,
        'completed': record.completed,
        'transition_time': record.transition_time,
        'first_activation_time': first.time if first else 0.0,
        'first_cause': first.cause if first else '',
        'first_dynamics_assisted': bool(first.dynamics_assisted) if first else False,
        'path': '-'.join(f"v{j}" for j in record.path),
        'n_disconnection': sum(1 for entry in firsts if entry.cause == DISCONNECTION),
        'n_nucleation': sum(1 for entry in firsts if entry.cause != DISCONNECTION),
        'n_v_deactivations': len(record.v_deactivations),
        'residual_active_u': ' '.join(f"u{i}" for i in record.residual_active_u),
    }
    for key in EVENT_COUNT_KEYS:
        row[f"events_{key}"] = record.event_counts.get(key, 0)
    return row


def summarize_replications(replications: pd.DataFrame, tu_by_r: Optional[Dict[float, float]] = None) -> pd.DataFrame:
    """Per-r statistics over completed replications"""
    if replications.empty:
        raise DataError("No replications to summarize")
    tu_by_r = tu_by_r or {}
    rows = []
    for r, group in replications.groupby('r', sort=True):
        done = group[group['completed'].astype(bool)]
        times = done['transition_time'].to_numpy(dtype=float)
        n = len(times)
        mean = float(times.mean()) if n else math.nan
        se = float(times.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        tu = tu_by_r.get(r, math.nan)
        with_first = done[done['first_cause'] != '']
        rows.append({
            'r': r,
            'replications': len(group),
            'completed': n,
            'timeouts': len(group) - n,
            'mean_T': mean,
            'std_error': se,
            'ci95_low': mean - 1.96 * se if n > 1 else math.nan,
            'ci95_high': mean + 1.96 * se if n > 1 else math.nan,
            'median_T': float(np.median(times)) if n else math.nan,
            'TU': tu,
            'frac_below_TU': float((times < tu).mean()) if n and not math.isnan(tu) else math.nan,
            'disconnection_fraction': _fraction(with_first['first_cause'] == DISCONNECTION),
            'assisted_fraction': _fraction(with_first['first_dynamics_assisted'].astype(bool)
                                           | (with_first['first_cause'] == DISCONNECTION)),
            'nucleation_fraction': _fraction(with_first['first_cause'] != DISCONNECTION),
            'mean_first_activation': float(done['first_activation_time'].mean()) if n else math.nan,
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def _fraction(mask: pd.Series) -> float:
    return float(mask.mean()) if len(mask) else math.nan


def cause_fractions(replications: pd.DataFrame) -> pd.DataFrame:
    """Per r: how the first V-activation happened"""
    summary = summarize_replications(replications)
    return summary[['r', 'disconnection_fraction', 'assisted_fraction', 'nucleation_fraction']].reset_index(drop=True)


def cause_trend(fractions: pd.DataFrame, expected_case: str, threshold: float = 0.9) -> Dict:
    """
    Check the cause fractions against the predicted mechanism.
    'disconnection' reads the dynamics-assisted fraction (an eroded fork counts),
    'nucleation' reads the strict nucleation fraction.
    """
    column = {'disconnection': 'assisted_fraction', 'nucleation': 'nucleation_fraction'}.get(expected_case)
    if column is None:
        last = fractions['disconnection_fraction'].iloc[-1]
        return {'expected': expected_case, 'column': 'disconnection_fraction', 'last': float(last),
                'trend': None, 'agrees': True}
    values = fractions[column].to_numpy(dtype=float)
    diffs = np.diff(values)
    trend = 'non-decreasing' if np.all(diffs >= -0.05) else 'mixed'
    return {
        'expected': expected_case,
        'column': column,
        'last': float(values[-1]),
        'trend': trend,
        'agrees': bool(values[-1] >= threshold),
    }


# =============================================================================
# SCALING FITS
# =============================================================================

def _ols(log_r: np.ndarray, log_mean: np.ndarray) -> Tuple[float, float]:
    slope, intercept = np.polyfit(log_r, log_mean, 1)
    return float(slope), float(intercept)


def fit_exponent(points: Sequence[Tuple[float, float]], samples: Optional[Sequence[np.ndarray]] = None,
                 n_boot: int = 1000, seed: int = 0) -> ExponentFit:
    """
    Least squares of log mean on log r. With per-point replication samples the 95% interval
    comes from resampling replications; without them the interval collapses to the slope.
    """
    if len(points) < 3:
        raise DataError(f"Need at least 3 points for a scaling fit, got {len(points)}")
    r = np.array([p[0] for p in points], dtype=float)
    means = np.array([p[1] for p in points], dtype=float)
    if np.any(r <= 0) or np.any(~(means > 0)):
        raise DataError(f"Scaling fit needs positive r and means, got r={r.tolist()}, means={means.tolist()}")
    log_r = np.log(r)
    slope, intercept = _ols(log_r, np.log(means))

    if samples is None:
        return ExponentFit(slope, intercept, slope, slope, len(points))
    if len(samples) != len(points):
        raise DataError("One sample array per point is required for the bootstrap")
    samples = [np.asarray(s, dtype=float) for s in samples]
    if any(s.size == 0 for s in samples):
        raise DataError("Empty replication sample in bootstrap")

    rng = np.random.default_rng(seed)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        boot_means = np.array([rng.choice(s, size=s.size).mean() for s in samples])
        slopes[b] = _ols(log_r, np.log(np.maximum(boot_means, np.finfo(float).tiny)))[0]
    low, high = np.percentile(slopes, [2.5, 97.5])
    return ExponentFit(slope, intercept, float(low), float(high), len(points))


# =============================================================================
# THEORY COMPARISON
# =============================================================================

def compare_theory(summary: pd.DataFrame, predictions: Dict[float, Dict], fit: Optional[ExponentFit],
                   exponent_tolerance: float = 0.1, ratio_drift: float = 2.0) -> Dict:
    """
    Ratio of empirical mean to predicted leading order per r, drift of that ratio across the
    grid and the fitted-vs-predicted exponent delta.

    predictions: r -> RegimePrediction.to_dict()
    """
    rows = []
    flags = []
    for _, row in summary.iterrows():
        r = row['r']
        pred = predictions.get(r)
        predicted = pred['mean_prediction'] if pred else math.nan
        ratio = row['mean_T'] / predicted if pred and predicted > 0 else math.nan
        rows.append({'r': r, 'empirical_mean': row['mean_T'], 'predicted': predicted, 'ratio': ratio,
                     'regime': pred['regime'] if pred else None, 'case': pred['case'] if pred else None})
        if row['timeouts']:
            flags.append(f"r={r:g}: {int(row['timeouts'])} replication(s) hit the event cap")

    ratios = np.array([x['ratio'] for x in rows], dtype=float)
    finite = ratios[np.isfinite(ratios) & (ratios > 0)]
    drift = float(finite.max() / finite.min()) if finite.size else math.nan
    drift_ok = bool(finite.size and drift <= ratio_drift)
    if finite.size and not drift_ok:
        flags.append(f"ratio drift {drift:.3g} exceeds factor {ratio_drift:g}")

    exponents = {pred['exponent'] for pred in predictions.values()} if predictions else set()
    predicted_exponent = exponents.pop() if len(exponents) == 1 else None
    exponent_report = None
    if fit is not None:
        delta = fit.slope - predicted_exponent if predicted_exponent is not None else None
        within = delta is not None and abs(delta) <= exponent_tolerance
        exponent_report = {**fit.to_dict(), 'predicted': predicted_exponent, 'delta': delta,
                           'within_tolerance': within}
        if delta is not None and not within:
            flags.append(f"fitted exponent {fit.slope:.3f} differs from {predicted_exponent:.3f} "
                         f"by more than {exponent_tolerance:g}")

    return {
        'rows': rows,
        'ratio_drift': drift,
        'ratio_drift_ok': drift_ok,
        'exponent': exponent_report,
        'flags': flags,
        'agrees': not flags,
    }


# =============================================================================
# OUTPUT FILES
# =============================================================================

def _clean(value):
    """JSON-safe copy with NaN turned into null"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: str, data: Dict) -> str:
    with open(path, 'w') as f:
        json.dump(_clean(data), f, indent=2)
    return path


def write_outputs(output_dir: str, replications: pd.DataFrame, summary: pd.DataFrame,
                  report: Dict) -> Dict[str, str]:
    """replications.csv, summary.csv and report.json"""
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        'replications': os.path.join(output_dir, 'replications.csv'),
        'summary': os.path.join(output_dir, 'summary.csv'),
        'report': os.path.join(output_dir, 'report.json'),
    }
    replications.to_csv(paths['replications'], index=False, columns=REPLICATION_COLUMNS)
    summary.to_csv(paths['summary'], index=False, columns=SUMMARY_COLUMNS)
    write_json(paths['report'], report)
    return paths


def frame_from_rows(rows: List[Dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=REPLICATION_COLUMNS)
