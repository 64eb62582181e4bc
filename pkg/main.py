#!/usr/bin/env python3
"""
Main Entry Point for the Active Shadowing planner

Runs the scenario-driven experiments: the three shadow illusions, the
method comparison and the observer's prediction curves, writing CSV series
and optional SVG overhead plots.
"""

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from asd_planner import ActiveShadowPlanner, PlanResult, foreshadow_lead
from geometry import GroundPoint
from legibility import LegibleOptimizer
from observer_sim import REPORT_COLUMNS, compare_methods, overhead_view, prediction_curve
from plotting import render_plan_svg
from scenario import ScenarioFile, load_scenario
from utils import (DEFAULT_LOG_FILE, LOG_FILE_ENV, ActiveShadowingError, InfeasibleShadowError,
                   ScenarioError, atomic_write_text, log_error, redirect_log_file,
                   set_log_level, setup_logger)


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2

PLAN_COLUMNS = ['t', 'robot_x', 'robot_y', 'robot_h', 'shadow_x', 'shadow_y',
                'alpha_deg', 'phi_deg', 'violated']

COMMANDS = ('plan-motion', 'plan-legible', 'plan-foreshadow', 'compare', 'observe')

WATCH_CHOICES = ('shadow', 'robot', 'legible')


def format_value(value) -> str:
    """CSV text of a value: 12 significant digits, lowercase booleans, empty for None"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def csv_text(columns: Sequence[str], rows: Iterable[Dict]) -> str:
    """Rows as comma-separated text with a header and LF line endings"""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({column: format_value(row[column]) for column in columns})
    return buffer.getvalue()


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Dict]) -> str:
    """
    Write rows as CSV text

    Args:
        path: Destination file (written atomically)
        columns: Column order
        rows: Dicts keyed by column name

    Returns:
        The destination path
    """
    return atomic_write_text(path, csv_text(columns, rows))


class ExperimentRunner:
    """
    Runs one scenario's subcommand and writes its output files
    """

    def __init__(self, scenario: ScenarioFile, out_dir: str, allow_violations: bool = False):
        """
        Initialize the runner

        Args:
            scenario: Validated scenario (command-line overrides already applied)
            out_dir: Directory receiving the output files
            allow_violations: Exit 0 even when a plan is infeasible or violates the rate limit
        """
        self.logger = setup_logger(__name__)
        self.scenario = scenario
        self.out_dir = out_dir
        self.allow_violations = allow_violations
        self.planner = ActiveShadowPlanner(
            constraint=scenario.constraint,
            nominal_light=scenario.nominal_light,
            smoothing_gain=scenario.smoothing_gain,
            enforce=scenario.enforce,
            optimizer=LegibleOptimizer(scenario.optimizer),
        )

    def run(self, command: str, watch: str = 'shadow') -> int:
        """
        Run a subcommand

        Args:
            command: One of COMMANDS
            watch: What the observer watches for `observe`

        Returns:
            Exit code
        """
        handlers = {
            'plan-motion': self.plan_motion,
            'plan-legible': self.plan_legible,
            'plan-foreshadow': self.plan_foreshadow,
            'compare': self.compare,
            'observe': lambda: self.observe(watch),
        }
        self.logger.info(f"Running {command} on scenario '{self.scenario.name}' into {self.out_dir}")
        return handlers[command]()

    def _path(self, *parts: str) -> str:
        return os.path.join(self.out_dir, *parts)

    def _write_plan(self, plan: PlanResult, subdir: str = "", title: str = "") -> int:
        directory = self._path(subdir) if subdir else self.out_dir
        scenario = self.scenario

        # Every output is rendered before the first file is written
        curve = prediction_curve(plan.shadow, scenario.scene, scenario.observer, scenario.dt)
        outputs = {
            'plan.csv': csv_text(PLAN_COLUMNS, plan.rows()),
            'posterior.csv': csv_text(['t'] + list(curve.labels), curve.rows()),
        }
        if 'svg' in scenario.formats:
            outputs['plan.svg'] = render_plan_svg(plan, scenario.scene, title or plan.method)
        for name, text in outputs.items():
            atomic_write_text(os.path.join(directory, name), text)
        self.logger.info(f"Wrote {sorted(outputs)} to {directory}")

        print(f"{title or plan.method}: {len(plan.robot)} samples, "
              f"{plan.violations}/{len(plan.constraint_report)} windows violated, "
              f"{len(plan.infeasible_samples)} infeasible, "
              f"max light change {plan.metrics['max_window_change_deg']:.3f} deg")
        return self._status(plan)

    def _status(self, plan: PlanResult) -> int:
        if plan.is_clean or self.allow_violations:
            return EXIT_OK
        self.logger.warning(f"Plan '{plan.method}' is infeasible or violates the rate limit; "
                            f"rerun with --allow-violations to accept it")
        return EXIT_VIOLATION

    def plan_motion(self) -> int:
        """Illusion of motion: a still tip whose shadow follows the desired motion"""
        motion = self.scenario.motion
        if motion is None:
            raise ScenarioError(
                f"Scenario '{self.scenario.name}' has no motion section; plan-motion needs "
                f"motion.stationary and desired_waypoints or sweeps_deg")

        dt = self.scenario.dt
        if motion.desired is not None:
            plan = self.planner.plan_motion_illusion(motion.stationary, motion.desired, dt=dt)
            return self._write_plan(plan, title='motion')

        status = EXIT_OK
        for amplitude in motion.sweeps_deg:
            desired = motion.sweep(amplitude, dt)
            plan = self.planner.plan_motion_illusion(motion.stationary, desired, dt=dt)
            name = f"sweep_{amplitude:g}"
            status = max(status, self._write_plan(plan, subdir=name, title=name))
        return status

    def plan_legible(self) -> int:
        """Illusion of legible motion"""
        scenario = self.scenario
        plan = self.planner.plan_legible_illusion(scenario.scene, scenario.intended_goal,
                                                  scenario.observer, params=scenario.optimizer)
        print(f"legibility: robot {plan.metrics['legibility_robot']:.4f}, "
              f"shadow {plan.metrics['legibility_shadow']:.4f}")
        return self._write_plan(plan, title='legible')

    def plan_foreshadow(self) -> int:
        """Illusion of imminent collision"""
        scenario = self.scenario
        plan = self.planner.plan_collision_foreshadow(scenario.robot_approach(), scenario.lookahead_k)
        goal = scenario.scene.goal(scenario.intended_goal)
        lead = foreshadow_lead(plan, GroundPoint(goal.x, goal.y))
        print(f"foreshadow: shadow reaches '{scenario.intended_goal}' at {lead['shadow_arrival']} s, "
              f"robot at {lead['robot_arrival']} s, lead {lead['lead']} s")
        return self._write_plan(plan, title='foreshadow')

    def compare(self, include_hologram: bool = False) -> int:
        """Efficiency and commit-time report for ASD, BIC, NE (and BEC)"""
        scenario = self.scenario
        rows = compare_methods(scenario.scene, scenario.observer, scenario.constraint,
                               scenario.optimizer, scenario.intended_goal,
                               include_hologram=include_hologram or scenario.include_hologram,
                               planner=self.planner)
        write_csv(self._path('report.csv'), REPORT_COLUMNS, rows)
        print("method  zeta_cm2  path_length_cm  commit_time_s  correct")
        for row in rows:
            print("  ".join(format_value(row[column]) for column in REPORT_COLUMNS))
        return EXIT_OK

    def observe(self, watch: str = 'shadow') -> int:
        """Prediction curve of the observer watching the shadow, the straight robot or the legible path"""
        scenario = self.scenario
        plan = self.planner.plan_legible_illusion(scenario.scene, scenario.intended_goal,
                                                  scenario.observer, params=scenario.optimizer)
        watched = {'shadow': plan.shadow, 'robot': plan.robot, 'legible': plan.desired}[watch]
        curve = prediction_curve(overhead_view(watched), scenario.scene, scenario.observer, scenario.dt)
        write_csv(self._path('posterior.csv'), ['t'] + list(curve.labels), curve.rows())
        return EXIT_OK


def run_scenario(command: str, path: str, out_dir: str, overrides: Dict,
                 allow_violations: bool = False, watch: str = 'shadow',
                 include_hologram: bool = False,
                 log_file: Optional[str] = None) -> Tuple[str, int]:
    """
    Load one scenario and run a subcommand on it

    Args:
        command: Subcommand name
        path: Scenario file path
        out_dir: Output directory (None uses the scenario's outputs.directory)
        overrides: Keyword arguments for ScenarioFile.with_overrides
        allow_violations: Accept infeasible or rate-violating plans
        watch: Observed channel for `observe`
        include_hologram: Add the BEC row to `compare`
        log_file: Log file for this run (parallel batch workers each get their own)

    Returns:
        (scenario path, exit code)
    """
    if log_file:
        redirect_log_file(log_file)
    logger = setup_logger(__name__)
    try:
        scenario = load_scenario(path).with_overrides(**overrides)
        runner = ExperimentRunner(scenario, out_dir or scenario.output_dir, allow_violations)
        if command == 'compare':
            return path, runner.compare(include_hologram)
        return path, runner.run(command, watch)
    except InfeasibleShadowError as e:
        log_error(logger, e, f"{command} on {path}")
        print(f"error: {path}: {e}", file=sys.stderr)
        return path, EXIT_VIOLATION
    except (ActiveShadowingError, OSError) as e:
        log_error(logger, e, f"{command} on {path}")
        print(f"error: {path}: {e}", file=sys.stderr)
        return path, EXIT_ERROR


def worker_log_file(stem: str) -> str:
    """Per-scenario log file next to the current one: run.log -> run.<stem>.log"""
    root, ext = os.path.splitext(os.environ.get(LOG_FILE_ENV, DEFAULT_LOG_FILE))
    return f"{root}.{stem}{ext or '.log'}"


def _formats(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Command-line parser shared by every subcommand"""
    parser = argparse.ArgumentParser(
        description="Active shadowing planner: shadow illusions and observer simulation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py plan-legible --scenario scenarios/two_cups.scn --out out/legible
  python main.py plan-motion --scenario scenarios/stationary.scn --format csv,svg
  python main.py plan-foreshadow --scenario scenarios/wine_glass.scn --lookahead 4
  python main.py compare --scenario scenarios/two_cups.scn --with-bec
  python main.py observe --scenario scenarios/two_cups.scn --watch robot
  python main.py compare --scenario a.scn --scenario b.scn --jobs 2
        """
    )

    parser.add_argument('command', choices=COMMANDS, help='Experiment to run')
    parser.add_argument('--scenario', action='append', required=True,
                        help='Scenario file (repeat to batch several scenarios)')
    parser.add_argument('--out', default=None,
                        help='Output directory (default: the scenario\'s outputs.directory)')
    parser.add_argument('--dt', type=float, default=None, help='Sampling step in seconds')
    parser.add_argument('--epsilon', type=float, default=None,
                        help='Maximum light change per window in degrees (default: 15)')
    parser.add_argument('--delta-t', type=float, default=None,
                        help='Rate-constraint window in seconds (default: 3)')
    parser.add_argument('--lookahead', type=float, default=None,
                        help='Foreshadowing lookahead k in seconds (default: 4)')
    parser.add_argument('--theta', type=float, default=None,
                        help='Observer commit threshold (default: 0.8)')
    parser.add_argument('--allow-violations', action='store_true',
                        help='Exit 0 even for infeasible or rate-violating plans')
    parser.add_argument('--enforce', action='store_true',
                        help='Clamp light schedules to the rate limit')
    parser.add_argument('--format', type=_formats, default=None,
                        help='Comma-separated output formats: csv, svg')
    parser.add_argument('--watch', choices=WATCH_CHOICES, default='shadow',
                        help='What the observer watches for observe (default: shadow)')
    parser.add_argument('--with-bec', action='store_true',
                        help='Add the hologram (BEC) row to compare')
    parser.add_argument('--jobs', type=int, default=1,
                        help='Scenarios processed in parallel (default: 1)')
    parser.add_argument('--log-file', default=None, help='Log file path')
    parser.add_argument('-v', '--verbose', action='store_true', help='Log optimizer progress')
    parser.add_argument('-q', '--quiet', action='store_true', help='Log warnings and errors only')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main function

    Args:
        argv: Command-line arguments (defaults to sys.argv[1:])

    Returns:
        Exit code: 0 success, 1 validation or I/O error, 2 infeasible or
        rate-violating plan without --allow-violations
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.log_file:
        redirect_log_file(args.log_file)
    if args.quiet:
        set_log_level(logging.WARNING)
    elif args.verbose:
        set_log_level(logging.DEBUG)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")

    overrides = {
        'dt': args.dt,
        'epsilon': args.epsilon,
        'delta_t': args.delta_t,
        'lookahead': args.lookahead,
        'theta': args.theta,
        'enforce': args.enforce,
        'formats': args.format,
    }

    paths = args.scenario
    batched = len(paths) > 1
    parallel = batched and args.jobs > 1
    jobs = []
    for path in paths:
        out_dir = args.out
        log_file = None
        if batched:
            stem = os.path.splitext(os.path.basename(path))[0]
            out_dir = os.path.join(args.out or 'out', stem)
            if parallel:
                log_file = worker_log_file(stem)
        jobs.append((args.command, path, out_dir, overrides, args.allow_violations,
                     args.watch, args.with_bec, log_file))

    if parallel:
        with ProcessPoolExecutor(max_workers=args.jobs) as executor:
            results = list(executor.map(run_scenario, *zip(*jobs)))
    else:
        results = [run_scenario(*job) for job in jobs]

    return max(code for _, code in results)


if __name__ == "__main__":
    sys.exit(main())
