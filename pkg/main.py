"""
Main orchestrator for CSMA transition-time experiments
Runs replication sweeps over r, compares them with the predicted scaling and writes reports
"""

import argparse
import math
import os
import sys
import traceback
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from activation_order import (
    PATH_COLUMNS,
    ActivationOrderResult,
    ClassificationError,
    PathCapacityError,
    RegimePrediction,
    classify_regime,
    d_hat,
    enumerate_paths,
    first_activation_mechanism,
    min_max_residual_degree,
    overtaking_step,
    path_table,
    predict_dynamic,
    predict_fixed_arbitrary,
    predict_fixed_complete,
    run_algorithm,
)
from config import CONFIG, ConfigError, ExperimentConfig, load_config
from ctmc_engine import (
    BIT_GENERATOR,
    DeadlockError,
    DynamicsLaw,
    ModelParams,
    SimulationTimeoutError,
    replication_seed,
    run_transition,
)
from disconnection_analytics import (
    BirthDeathChain,
    PhaseTypeDist,
    closed_form_constant,
    hitting_time_system,
    mean_disconnection_time,
    pht_grid,
)
from graph_model import BipartiteGraph, GraphError, graph_from_spec, random_bipartite_graphs
from queue_dynamics import QueueParams, expected_hitting_time_TU
from utils import (
    DataError,
    ExponentFit,
    cause_fractions,
    cause_trend,
    compare_theory,
    fit_exponent,
    frame_from_rows,
    record_row,
    summarize_replications,
    write_json,
    write_outputs,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

SAMPLED_PATHS = 2000
DEFAULT_PATHS_R = 1e4


@dataclass
class SweepResult:
    """Tables, fit and theory rows of one sweep"""
    replications: pd.DataFrame
    summary: pd.DataFrame
    fit: Optional[ExponentFit]
    predictions: Dict[float, Dict]
    report: Dict = field(default_factory=dict)


# =============================================================================
# REPLICATIONS
# =============================================================================

def _replicate(graph: BipartiteGraph, params: ModelParams, master_seed: int,
               r_index: int, replication: int) -> Dict:
    """One run_transition as a CSV row; a timeout yields a row marked incomplete"""
    seed = replication_seed(master_seed, r_index, replication)
    try:
        record = run_transition(graph, params, seed)
    except SimulationTimeoutError as e:
        record = e.record
    return record_row(record, params.r, r_index, replication)


def simulate_grid(graph: BipartiteGraph, config: ExperimentConfig, workers: int = 1,
                  show_progress: bool = False, static: bool = False) -> pd.DataFrame:
    """All replications of all r values; row order is (r_index, replication) whatever the worker count"""
    tasks = []
    for r_index, r in enumerate(config.r_grid):
        params = config.model_params(r)
        if static:
            params = replace(params, dynamics=DynamicsLaw())
        for replication in range(config.replications):
            tasks.append((params, r_index, replication))

    rows = Parallel(n_jobs=workers)(
        delayed(_replicate)(graph, params, config.seed, r_index, replication)
        for params, r_index, replication in tqdm(tasks, desc="Simulating", disable=not show_progress)
    )
    return frame_from_rows(rows)


def admissible_paths(graph: BipartiteGraph, seed: int = 0) -> Tuple[List[ActivationOrderResult], bool]:
    """Exhaustive paths when feasible, otherwise distinct paths from repeated sampling"""
    try:
        return enumerate_paths(graph), True
    except PathCapacityError:
        rng = np.random.default_rng(seed)
        seen = {}
        for _ in range(SAMPLED_PATHS):
            path = run_algorithm(graph, rng)
            seen.setdefault(path.order, path)
        return list(seen.values()), False


def theory_prediction(graph: BipartiteGraph, paths: List[ActivationOrderResult],
                      config: ExperimentConfig, r: float) -> RegimePrediction:
    """Leading-order prediction for one r; complete graphs use the complete-graph formula"""
    params = config.model_params(r)
    beta = config.rates.beta
    complete = graph.m >= 1 and len(graph.edges) == graph.m * graph.n
    if complete:
        static = predict_fixed_complete(graph.m, beta, params.queues)
    else:
        static = predict_fixed_arbitrary(paths, beta, params.queues)
    if config.dynamics.kind == 'static':
        return static
    d_star = paths[0].d_star if paths else 0
    prediction = predict_dynamic(d_star, beta, params.dynamics, params.queues, paths)
    if prediction.case == 'SDnc':
        static.case = 'SDnc'
        return static
    return prediction


# =============================================================================
# ORCHESTRATOR
# =============================================================================

class ExperimentOrchestrator:
    """Orchestrates one sweep: theory, replications, statistics, outputs"""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[str] = None,
                 workers: Optional[int] = None, show_progress: Optional[bool] = None):
        """
        Initialize the orchestrator

        Args:
            config: Validated experiment config
            output_dir: Directory to store output files (config, then environment default)
            workers: joblib worker count
            show_progress: Show the tqdm bar
        """
        self.config = config
        self.output_dir = output_dir or config.output_dir or CONFIG['output_dir']
        self.workers = workers or CONFIG['workers']
        self.show_progress = CONFIG['show_progress'] if show_progress is None else show_progress
        self.graph: Optional[BipartiteGraph] = None
        self.paths: List[ActivationOrderResult] = []

    def prepare_theory(self) -> Tuple[bool, Dict, str]:
        """
        Build the graph, its admissible paths and the prediction at every r

        Returns:
            Tuple of (success, theory_dict, error_message)
        """
        try:
            print(f"[1/4] Preparing graph and predictions")
            self.graph = self.config.build_graph()
            self.paths, exhaustive = admissible_paths(self.graph, self.config.seed)
            d_star = self.paths[0].d_star if self.paths else 0
            regime = classify_regime(d_star, self.config.rates.beta)
            print(f"   ✓ Graph: M={self.graph.m}, N={self.graph.n}, {len(self.graph.edges)} edges")
            print(f"   ✓ {len(self.paths)} admissible path(s){'' if exhaustive else ' (sampled)'}, "
                  f"d*={d_star}, {regime.value}")

            predictions = {}
            for r in self.config.r_grid:
                predictions[r] = theory_prediction(self.graph, self.paths, self.config, r).to_dict()
            first = predictions[self.config.r_grid[0]]
            print(f"   ✓ Prediction: {first['prefactor']:.4g} * r^{first['exponent']:.4g} ({first['case']})")

            tu = {r: expected_hitting_time_TU(self.config.model_params(r).queues) for r in self.config.r_grid}
            return True, {'d_star': d_star, 'regime': regime.value, 'exhaustive_paths': exhaustive,
                          'predictions': predictions, 'TU': tu}, ""

        except Exception as e:
            error_msg = f"Theory preparation failed: {str(e)}\n{traceback.format_exc()}"
            print(f"   ✗ {error_msg}")
            return False, {}, error_msg

    def run_replications(self) -> Tuple[bool, pd.DataFrame, str]:
        """
        Fan out every (r, replication) pair

        Returns:
            Tuple of (success, replications_df, error_message)
        """
        try:
            total = len(self.config.r_grid) * self.config.replications
            print(f"[2/4] Running {total} replications on {self.workers} worker(s) "
                  f"({self.config.dynamics.law().describe()})")
            df = simulate_grid(self.graph, self.config, self.workers, self.show_progress)

            timeouts = int((~df['completed'].astype(bool)).sum())
            if timeouts:
                print(f"   ⚠ {timeouts} replication(s) hit the event cap")
            for r, group in df.groupby('r', sort=True):
                if not group['completed'].astype(bool).any():
                    return False, df, f"All replications at r={r:g} timed out"
            print(f"   ✓ {len(df) - timeouts} replications completed")
            return True, df, ""

        except DeadlockError as e:
            error_msg = f"Simulation deadlocked: {str(e)}"
            print(f"   ✗ {error_msg}")
            return False, pd.DataFrame(), error_msg
        except Exception as e:
            error_msg = f"Simulation failed: {str(e)}\n{traceback.format_exc()}"
            print(f"   ✗ {error_msg}")
            return False, pd.DataFrame(), error_msg

    def analyze_results(self, replications: pd.DataFrame, theory: Dict) -> Tuple[bool, Optional[SweepResult], str]:
        """
        Summaries, exponent fit, theory comparison and cause fractions

        Returns:
            Tuple of (success, sweep_result, error_message)
        """
        try:
            print(f"[3/4] Analyzing results")
            summary = summarize_replications(replications, theory['TU'])

            fit = None
            if len(summary) >= 3:
                samples = [replications[(replications['r'] == r) & replications['completed'].astype(bool)]
                           ['transition_time'].to_numpy(dtype=float) for r in summary['r']]
                points = list(zip(summary['r'], summary['mean_T']))
                fit = fit_exponent(points, samples, seed=self.config.seed)
                print(f"   ✓ Fitted exponent: {fit.slope:.3f} (95% CI {fit.ci_low:.3f} .. {fit.ci_high:.3f})")

            tolerances = self.config.tolerances
            comparison = compare_theory(summary, theory['predictions'], fit,
                                        tolerances.exponent, tolerances.ratio_drift)
            fractions = cause_fractions(replications)
            d_star = theory['d_star']
            expected_case = first_activation_mechanism(d_star, self.config.rates.beta, self.config.dynamics.law())
            trend = cause_trend(fractions, expected_case)

            for row in comparison['rows']:
                print(f"   ✓ r={row['r']:g}: mean={row['empirical_mean']:.4g}, "
                      f"predicted={row['predicted']:.4g}, ratio={row['ratio']:.3f}")
            for flag in comparison['flags']:
                print(f"   ⚠ {flag}")

            report = {
                'name': self.config.name,
                'rng': BIT_GENERATOR,
                'master_seed': self.config.seed,
                'graph': self.graph.to_dict(),
                'parameters': self.config.model_dump(mode='json'),
                'd_star': d_star,
                'regime': theory['regime'],
                'exhaustive_paths': theory['exhaustive_paths'],
                'paths': self._path_rows(),
                'predictions': {f"{r:g}": pred for r, pred in theory['predictions'].items()},
                'comparison': comparison,
                'cause_fractions': fractions.to_dict(orient='records'),
                'cause_trend': trend,
            }
            sweep = SweepResult(replications, summary, fit, theory['predictions'], report)
            return True, sweep, ""

        except DataError as e:
            error_msg = f"Analysis failed: {str(e)}"
            print(f"   ✗ {error_msg}")
            return False, None, error_msg
        except Exception as e:
            error_msg = f"Analysis failed: {str(e)}\n{traceback.format_exc()}"
            print(f"   ✗ {error_msg}")
            return False, None, error_msg

    def _path_rows(self) -> List[Dict]:
        """Admissible paths for the report; slow dynamics add d_hat and the overtaking step"""
        law = self.config.dynamics.law()
        beta = self.config.rates.beta
        rows = []
        for p in self.paths:
            row = {'path': p.label(), 'probability': str(p.probability), 'd_bars': list(p.d_bars)}
            if law.kind == 'slow':
                row['d_hat'] = d_hat(beta, law.exponent)
                row['overtaking_step'] = overtaking_step(p, beta, law.exponent)
            rows.append(row)
        return rows

    def save_outputs(self, sweep: SweepResult) -> Tuple[bool, Dict[str, str], str]:
        """
        Write replications.csv, summary.csv and report.json

        Returns:
            Tuple of (success, paths, error_message)
        """
        try:
            print(f"[4/4] Writing outputs to {self.output_dir}")
            paths = write_outputs(self.output_dir, sweep.replications, sweep.summary, sweep.report)
            for path in paths.values():
                print(f"   ✓ {path}")
            return True, paths, ""
        except OSError as e:
            error_msg = f"Could not write outputs: {str(e)}"
            print(f"   ✗ {error_msg}")
            return False, {}, error_msg


def _failure(error: str, exit_code: int = EXIT_DATA, sweep: Optional[SweepResult] = None) -> Dict:
    return {'success': False, 'sweep': sweep, 'paths': {}, 'exit_code': exit_code, 'error_message': error}


def run_sweep(config: ExperimentConfig, output_dir: Optional[str] = None, workers: Optional[int] = None,
              show_progress: Optional[bool] = None, write: bool = True) -> Dict:
    """
    Main entry point for a sweep

    Returns:
        Dictionary with results:
        {
            'success': bool,
            'sweep': SweepResult,
            'paths': dict of written files,
            'exit_code': int,
            'error_message': str
        }
    """
    print("\n" + "=" * 70)
    print(f"TRANSITION-TIME SWEEP '{config.name}' - STARTING")
    print("=" * 70)

    orchestrator = ExperimentOrchestrator(config, output_dir, workers, show_progress)

    success, theory, error = orchestrator.prepare_theory()
    if not success:
        return _failure(error)

    success, replications, error = orchestrator.run_replications()
    if not success:
        return _failure(error)

    success, sweep, error = orchestrator.analyze_results(replications, theory)
    if not success:
        return _failure(error)

    paths = {}
    if write:
        success, paths, error = orchestrator.save_outputs(sweep)
        if not success:
            return _failure(error, sweep=sweep)

    print("\n" + "=" * 70)
    print(f"TRANSITION-TIME SWEEP '{config.name}' - COMPLETED")
    print("=" * 70)

    return {'success': True, 'sweep': sweep, 'paths': paths, 'exit_code': EXIT_OK, 'error_message': ''}


def paired_static_ratio(config: ExperimentConfig, workers: int = 1, show_progress: bool = False) -> pd.DataFrame:
    """Mean transition time with the configured dynamics over the same seeds with no dynamics"""
    graph = config.build_graph()
    dynamic = simulate_grid(graph, config, workers, show_progress)
    static = simulate_grid(graph, config, workers, show_progress, static=True)
    rows = []
    for r in config.r_grid:
        d = dynamic[(dynamic['r'] == r) & dynamic['completed'].astype(bool)]['transition_time']
        s = static[(static['r'] == r) & static['completed'].astype(bool)]['transition_time']
        rows.append({'r': r, 'dynamic_mean': float(d.mean()), 'static_mean': float(s.mean()),
                     'ratio': float(d.mean() / s.mean()) if len(s) and s.mean() > 0 else math.nan})
    return pd.DataFrame(rows, columns=['r', 'dynamic_mean', 'static_mean', 'ratio'])


# =============================================================================
# ORACLE SUITE
# =============================================================================

def run_oracles(max_m: int = 12, graphs: int = 200, seed: int = 0) -> Dict[str, bool]:
    """Small-instance exact checks; prints one line per check"""
    results = {}

    worst = 0.0
    for m in range(1, max_m + 1):
        system = hitting_time_system(m, 1.0)
        for d in range(1, m + 1):
            closed = float(closed_form_constant(m, d))
            recursion = mean_disconnection_time(m, d, 1.0)
            worst = max(worst, abs(recursion - closed) / closed, abs(system[d - 1] - closed) / closed)
    results['mean_disconnection_oracles'] = worst <= 1e-12
    print(f"   {'✓' if worst <= 1e-12 else '✗'} Closed sum, recursion and linear system agree "
          f"(max rel. error {worst:.2e}, M <= {max_m})")

    worst = 0.0
    for m in range(1, 9):
        chain = BirthDeathChain(m, 1.0)
        for d in range(1, m + 1):
            closed = float(closed_form_constant(m, d))
            worst = max(worst, abs(PhaseTypeDist.from_chain(chain, d).mean() - closed) / closed)
    results['phase_type_mean'] = worst <= 1e-9
    print(f"   {'✓' if worst <= 1e-9 else '✗'} Phase-type mean matches (max rel. error {worst:.2e}, M <= 8)")

    consistent = True
    brute_force = True
    for graph in random_bipartite_graphs(graphs, 6, 6, seed):
        paths = enumerate_paths(graph)
        d_values = {p.d_star for p in paths}
        consistent &= len(d_values) == 1 and sum(p.probability for p in paths) == 1
        brute_force &= min_max_residual_degree(graph) == paths[0].d_star
    results['greedy_consistency'] = consistent
    results['brute_force_d_star'] = brute_force
    print(f"   {'✓' if consistent else '✗'} All admissible paths share d* and probabilities sum to 1 ({graphs} graphs)")
    print(f"   {'✓' if brute_force else '✗'} Brute-force min-max residual degree equals d*")
    return results


# =============================================================================
# CLI
# =============================================================================

def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={'seed': args.seed})
    return config


def cmd_run(args) -> int:
    config = _load(args)
    result = run_sweep(config, args.out, args.workers, False if args.quiet else None)
    if not result['success']:
        print(f"\n✗ Sweep failed: {result['error_message']}")
        return result['exit_code']

    if args.paired_static:
        ratios = paired_static_ratio(config, args.workers or CONFIG['workers'])
        print(ratios.to_string(index=False))
        if result['paths']:
            out_dir = os.path.dirname(result['paths']['summary'])
            ratios.to_csv(os.path.join(out_dir, 'paired_static.csv'), index=False)

    report = result['sweep'].report
    print(f"\n✓ Sweep completed: {'agrees with' if report['comparison']['agrees'] else 'deviates from'} "
          f"the predicted scaling")
    return EXIT_OK


def cmd_paths(args) -> int:
    if args.graph:
        try:
            graph = graph_from_spec(args.graph)
        except (GraphError, OSError, ValueError) as e:
            raise ConfigError(f"Could not read graph {args.graph}: {e}") from e
        beta, alpha = args.beta, args.alpha
        queues = QueueParams(r=args.r if args.r is not None else DEFAULT_PATHS_R)
    else:
        config = _load(args)
        graph = config.build_graph()
        beta = config.rates.beta
        alpha = config.dynamics.alpha if config.dynamics.kind == 'slow' else args.alpha
        queues = config.model_params(args.r if args.r is not None else config.r_grid[-1]).queues
    if not beta > 0 or (alpha is not None and not alpha > 0) or not queues.r > 0:
        raise ConfigError(f"Need beta > 0, alpha > 0 and r > 0, got beta={beta}, alpha={alpha}, r={queues.r}")

    paths, exhaustive = admissible_paths(graph)
    if not paths:
        raise ConfigError("Graph has no V-nodes, nothing to order")
    rows, prediction = path_table(paths, beta, queues, alpha)
    table = pd.DataFrame(rows, columns=PATH_COLUMNS)
    print(table.to_string(index=False))
    d_star = paths[0].d_star
    print(f"\nd* = {d_star}, regime at beta={beta:g}: {prediction.regime.value}"
          f"{'' if exhaustive else ' (sampled paths)'}")
    print(f"Path-weighted prediction at r={queues.r:g}: {prediction.prefactor:.4g} * r^{prediction.exponent:.4g}"
          f" = {prediction.mean_prediction:.4g}{' (drain time T_U)' if prediction.uses_TU else ''}")
    if alpha is not None:
        print(f"d_hat = {d_hat(beta, alpha)} at alpha={alpha:g}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        table.to_csv(os.path.join(args.out, 'paths.csv'), index=False)
        write_json(os.path.join(args.out, 'paths.json'), {
            'd_star': d_star,
            'beta': beta,
            'alpha': alpha,
            'r': queues.r,
            'd_hat': d_hat(beta, alpha) if alpha is not None else None,
            'exhaustive': exhaustive,
            'prediction': {key: value for key, value in prediction.to_dict().items() if key != 'conditional'},
            'paths': rows,
        })
    return EXIT_OK


def cmd_pht(args) -> int:
    if not 1 <= args.d <= args.m:
        raise ConfigError(f"Need 1 <= d <= m, got m={args.m}, d={args.d}")
    if not args.lam > 0 or args.points < 2:
        raise ConfigError(f"Need lam > 0 and at least 2 points, got lam={args.lam}, points={args.points}")
    mean = mean_disconnection_time(args.m, args.d, 1.0 / args.lam)
    x_max = args.x_max if args.x_max is not None else 5.0 * mean
    grid = pht_grid(args.m, args.d, args.lam, np.linspace(0.0, x_max, args.points))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"pht_M{args.m}_d{args.d}.csv")
        grid.to_csv(path, index=False)
        print(f"✓ {path} (mean {mean:.6g})")
    else:
        print(grid.to_csv(index=False), end='')
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _load(args)
    graph = config.build_graph()
    print(f"✓ {args.config} is valid: '{config.name}', M={graph.m}, N={graph.n}, "
          f"{len(config.r_grid)} r value(s) x {config.replications} replications")
    return EXIT_OK


def cmd_oracle(args) -> int:
    print("Running small-instance oracle suite")
    results = run_oracles(seed=args.seed or 0)
    return EXIT_OK if all(results.values()) else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CSMA transition times on dynamic bipartite interference graphs")
    parser.add_argument('--config', help="Experiment YAML file")
    parser.add_argument('--workers', type=int, default=None, help="Parallel workers (default CSMA_WORKERS)")
    parser.add_argument('--out', default=None, help="Output directory (default CSMA_OUTPUT_DIR)")
    parser.add_argument('--seed', type=int, default=None, help="Override the master seed")
    parser.add_argument('--quiet', action='store_true', help="No progress bar")
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help="Run a sweep over r")
    run.add_argument('--paired-static', action='store_true',
                     help="Also rerun the same seeds without dynamics and report mean ratios")
    run.set_defaults(func=cmd_run)

    paths = sub.add_parser('paths', help="Admissible activation orders, d* and regime")
    paths.add_argument('--graph', help="Graph JSON file (instead of --config)")
    paths.add_argument('--beta', type=float, default=0.5)
    paths.add_argument('--alpha', type=float, default=None,
                       help="Slow-dynamics exponent; adds d_hat and the overtaking step per path")
    paths.add_argument('--r', type=float, default=None,
                       help=f"Scale for the predictions (default: last r of the config, else {DEFAULT_PATHS_R:g})")
    paths.set_defaults(func=cmd_paths)

    pht = sub.add_parser('pht', help="Survival, cdf and density of the disconnection time")
    pht.add_argument('--m', type=int, required=True)
    pht.add_argument('--d', type=int, required=True)
    pht.add_argument('--lam', type=float, default=1.0)
    pht.add_argument('--x-max', type=float, default=None)
    pht.add_argument('--points', type=int, default=101)
    pht.set_defaults(func=cmd_pht)

    sub.add_parser('validate', help="Check a config file").set_defaults(func=cmd_validate)
    sub.add_parser('oracle', help="Small-instance exact checks").set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ClassificationError) as e:
        print(f"\n✗ Config error: {e}")
        return EXIT_CONFIG
    except (DataError, SimulationTimeoutError) as e:
        print(f"\n✗ {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
