"""
End-to-end tests of the command-line experiments
"""

import csv
import json
import logging
import math
import os
import sys

import pytest

# Add parent directory to path to import modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import main
from asd_planner import RateConstraint
from geometry import GripperPose, LightDirection, project_shadow
from scenario import load_scenario
from utils import setup_logger


ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TWO_CUPS = os.path.join(ROOT, 'scenarios', 'two_cups.scn')
WINE_GLASS = os.path.join(ROOT, 'scenarios', 'wine_glass.scn')
STATIONARY = os.path.join(ROOT, 'scenarios', 'stationary.scn')


def run(tmp_path, command, scenario, *extra, out='out'):
    """Run main() writing into tmp_path/out and logging into tmp_path"""
    argv = [command, '--scenario', scenario, '--out', str(tmp_path / out),
            '--log-file', str(tmp_path / 'run.log'), '-q', *extra]
    return main.main(argv)


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def write_scenario(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


def still_scenario(stationary, desired_waypoints):
    return {
        'scene': {
            'start': [0.0, 40.0, 20.0],
            'goals': [{'label': 'green', 'position': [11.5, 0.0, 10.0]}],
        },
        'motion': {'stationary': stationary, 'desired_waypoints': desired_waypoints},
    }


def test_format_value():
    """CSV text conventions"""
    assert main.format_value(None) == ""
    assert main.format_value(True) == "true"
    assert main.format_value(False) == "false"
    assert main.format_value(0.1 + 0.2) == "0.3"
    assert main.format_value(0.0) == "0"
    assert main.format_value('ASD') == "ASD"


def test_compare_report(tmp_path):
    """Three rows; the shadow keeps the robot on the straight path"""
    assert run(tmp_path, 'compare', TWO_CUPS) == main.EXIT_OK
    rows = {row['method']: row for row in read_rows(tmp_path / 'out' / 'report.csv')}
    assert list(rows) == ['ASD', 'BIC', 'NE']
    assert float(rows['ASD']['zeta_cm2']) == 0.0
    assert float(rows['NE']['zeta_cm2']) == 0.0
    assert float(rows['BIC']['zeta_cm2']) > 100.0
    assert float(rows['ASD']['commit_time_s']) < float(rows['NE']['commit_time_s'])
    assert rows['ASD']['correct'] == 'true'


def test_compare_with_hologram(tmp_path):
    """--with-bec adds the hologram row"""
    assert run(tmp_path, 'compare', TWO_CUPS, '--with-bec') == main.EXIT_OK
    rows = read_rows(tmp_path / 'out' / 'report.csv')
    assert [row['method'] for row in rows] == ['ASD', 'BIC', 'NE', 'BEC']


def test_sweeps_flag_violations(tmp_path):
    """Fast sweeps fail without --allow-violations; the 15 degree sweep stays clean"""
    assert run(tmp_path, 'plan-motion', STATIONARY, out='strict') == main.EXIT_VIOLATION
    assert run(tmp_path, 'plan-motion', STATIONARY, '--allow-violations') == main.EXIT_OK

    gentle = read_rows(tmp_path / 'out' / 'sweep_15' / 'plan.csv')
    assert len(gentle) == 61
    assert all(row['violated'] == 'false' for row in gentle)
    assert min(float(row['alpha_deg']) for row in gentle) == pytest.approx(75.0, abs=1e-9)

    steep = read_rows(tmp_path / 'out' / 'sweep_45' / 'plan.csv')
    assert any(row['violated'] == 'true' for row in steep)
    assert os.path.exists(tmp_path / 'out' / 'sweep_30' / 'posterior.csv')


def test_motion_identity(tmp_path):
    """A desired path equal to the still tip needs a constant overhead light"""
    path = write_scenario(tmp_path, 'still.scn',
                          still_scenario([0, 0, 10], [[0, 0, 0, 10], [6, 0, 0, 10]]))
    assert run(tmp_path, 'plan-motion', path) == main.EXIT_OK
    rows = read_rows(tmp_path / 'out' / 'plan.csv')
    assert len(rows) == 61
    for row in rows:
        assert float(row['alpha_deg']) == 90.0
        assert float(row['phi_deg']) == 0.0
        assert (row['robot_x'], row['robot_y'], row['robot_h']) == ('0', '0', '10')
        assert (row['shadow_x'], row['shadow_y']) == ('0', '0')
        assert row['violated'] == 'false'


def test_grounded_tip_is_infeasible(tmp_path):
    """A tip resting on the table cannot move its shadow"""
    path = write_scenario(tmp_path, 'grounded.scn',
                          still_scenario([0, 0, 0], [[0, 0, 0, 0], [6, 10, 0, 0]]))
    assert run(tmp_path, 'plan-motion', path, '--allow-violations') == main.EXIT_VIOLATION
    assert not os.path.exists(tmp_path / 'out' / 'plan.csv')


def test_plan_motion_needs_motion_section(tmp_path):
    """Scenarios without motion cannot run plan-motion"""
    assert run(tmp_path, 'plan-motion', WINE_GLASS) == main.EXIT_ERROR


def test_foreshadow_outputs(tmp_path, capsys):
    """The shadow reaches the glass ahead of the robot and the plan satisfies the projection identity"""
    assert run(tmp_path, 'plan-foreshadow', WINE_GLASS, out='strict') == main.EXIT_VIOLATION
    assert run(tmp_path, 'plan-foreshadow', WINE_GLASS, '--allow-violations') == main.EXIT_OK
    assert 'foreshadow:' in capsys.readouterr().out

    rows = read_rows(tmp_path / 'out' / 'plan.csv')
    assert len(rows) == 101
    assert os.path.exists(tmp_path / 'out' / 'plan.svg')
    for row in rows:
        pose = GripperPose(float(row['robot_x']), float(row['robot_y']), float(row['robot_h']))
        light = LightDirection(float(row['alpha_deg']), float(row['phi_deg']))
        shadow = project_shadow(pose, light)
        assert math.hypot(shadow.x - float(row['shadow_x']),
                          shadow.y - float(row['shadow_y'])) <= 1e-6

    arrival = next(float(row['t']) for row in rows
                   if abs(float(row['shadow_x'])) < 1e-6 and abs(float(row['shadow_y'])) < 1e-6)
    assert arrival == pytest.approx(6.0, abs=0.1)


def test_vertical_descent_onto_a_glass(tmp_path):
    """A glass directly under the start still gets a complete foreshadow output set"""
    path = write_scenario(tmp_path, 'descent.scn', {
        'scene': {
            'start': [0.0, 0.0, 30.0],
            'goals': [{'label': 'glass', 'position': [0.0, 0.0, 15.0]}],
        },
        'outputs': {'formats': ['csv', 'svg']},
    })
    assert run(tmp_path, 'plan-foreshadow', path, '--allow-violations') == main.EXIT_OK
    assert sorted(os.listdir(tmp_path / 'out')) == ['plan.csv', 'plan.svg', 'posterior.csv']
    posterior = read_rows(tmp_path / 'out' / 'posterior.csv')
    assert all(float(row['glass']) == 1.0 for row in posterior)


def test_reruns_are_byte_identical(tmp_path):
    """Same scenario, same bytes in every output file"""
    for out in ('first', 'second'):
        assert run(tmp_path, 'plan-foreshadow', WINE_GLASS, '--allow-violations',
                   '--format', 'csv,svg', out=out) == main.EXIT_OK
    for name in ('plan.csv', 'posterior.csv', 'plan.svg'):
        first = (tmp_path / 'first' / name).read_bytes()
        second = (tmp_path / 'second' / name).read_bytes()
        assert first == second
        assert b'\r\n' not in first


def test_overrides_reach_the_plan(tmp_path):
    """--dt and --lookahead change the sampling and the lead"""
    assert run(tmp_path, 'plan-foreshadow', WINE_GLASS, '--allow-violations', '--dt', '0.5',
               '--lookahead', '2', '--format', 'csv') == main.EXIT_OK
    rows = read_rows(tmp_path / 'out' / 'plan.csv')
    assert len(rows) == 21
    assert not os.path.exists(tmp_path / 'out' / 'plan.svg')
    arrival = next(float(row['t']) for row in rows
                   if abs(float(row['shadow_x'])) < 1e-6 and abs(float(row['shadow_y'])) < 1e-6)
    assert arrival == pytest.approx(8.0)


def test_unknown_key_fails(tmp_path):
    """Schema errors exit 1 without writing outputs"""
    data = still_scenario([0, 0, 10], [[0, 0, 0, 10], [6, 0, 0, 10]])
    data['planner'] = {'speed': 3}
    path = write_scenario(tmp_path, 'bad.scn', data)
    assert run(tmp_path, 'plan-motion', path) == main.EXIT_ERROR
    assert not os.path.exists(tmp_path / 'out')


def test_observe_watch_robot(tmp_path):
    """The prediction curve of the straight robot"""
    assert run(tmp_path, 'observe', TWO_CUPS, '--watch', 'robot') == main.EXIT_OK
    rows = read_rows(tmp_path / 'out' / 'posterior.csv')
    assert list(rows[0]) == ['t', 'green', 'red']
    assert len(rows) == 101
    assert float(rows[0]['green']) == pytest.approx(0.5)
    assert float(rows[-1]['green']) > 0.99


def test_batch_writes_one_directory_per_scenario(tmp_path):
    """Several --scenario flags write into out/<scenario name>"""
    other = write_scenario(tmp_path, 'other_glass.scn',
                           json.loads(open(WINE_GLASS, encoding='utf-8').read()))
    argv = ['plan-foreshadow', '--scenario', WINE_GLASS, '--scenario', other,
            '--out', str(tmp_path / 'batch'), '--log-file', str(tmp_path / 'run.log'),
            '-q', '--allow-violations', '--format', 'csv']
    assert main.main(argv) == main.EXIT_OK
    assert os.path.exists(tmp_path / 'batch' / 'wine_glass' / 'plan.csv')
    assert os.path.exists(tmp_path / 'batch' / 'other_glass' / 'plan.csv')


def test_parallel_batch_logs_per_scenario(tmp_path):
    """Each parallel worker logs to its own file next to --log-file"""
    other = write_scenario(tmp_path, 'other_glass.scn',
                           json.loads(open(WINE_GLASS, encoding='utf-8').read()))
    argv = ['plan-foreshadow', '--scenario', WINE_GLASS, '--scenario', other,
            '--out', str(tmp_path / 'batch'), '--log-file', str(tmp_path / 'run.log'),
            '-q', '--allow-violations', '--format', 'csv', '--jobs', '2']
    assert main.main(argv) == main.EXIT_OK
    assert os.path.exists(tmp_path / 'batch' / 'other_glass' / 'plan.csv')
    assert os.path.exists(tmp_path / 'run.wine_glass.log')
    assert os.path.exists(tmp_path / 'run.other_glass.log')


def test_worker_log_file_names(monkeypatch):
    """The scenario stem goes before the extension"""
    monkeypatch.setenv('ASD_LOG_FILE', os.path.join('logs', 'run.log'))
    assert main.worker_log_file('two_cups') == os.path.join('logs', 'run.two_cups.log')
    monkeypatch.setenv('ASD_LOG_FILE', 'plain')
    assert main.worker_log_file('a') == 'plain.a.log'


def test_log_level_flags_reach_later_loggers(tmp_path, monkeypatch, capsys):
    """-v shows optimizer iterations and -q silences INFO, also for loggers created afterwards"""
    monkeypatch.setenv('ASD_LOG_LEVEL', 'INFO')
    argv = ['plan-legible', '--scenario', TWO_CUPS, '--out', str(tmp_path / 'verbose'),
            '--log-file', str(tmp_path / 'verbose.log'), '-v', '--allow-violations',
            '--format', 'csv']
    assert main.main(argv) == main.EXIT_OK
    assert 'Iteration 1:' in (tmp_path / 'verbose.log').read_text(encoding='utf-8')
    assert setup_logger('late_verbose_component').level == logging.DEBUG

    capsys.readouterr()
    assert run(tmp_path, 'plan-legible', TWO_CUPS, '--allow-violations', '--format', 'csv') == main.EXIT_OK
    captured = capsys.readouterr()
    assert ' - INFO - ' not in captured.err + captured.out
    log = tmp_path / 'run.log'
    assert ' - INFO - ' not in (log.read_text(encoding='utf-8') if log.exists() else '')
    assert setup_logger('late_quiet_component').level == logging.WARNING


def test_constraint_overrides_reach_the_planner(tmp_path):
    """--epsilon and --delta-t land in the runner's planner"""
    scenario = load_scenario(TWO_CUPS).with_overrides(epsilon=20.0, delta_t=2.0)
    runner = main.ExperimentRunner(scenario, str(tmp_path / 'out'))
    assert runner.planner.constraint == RateConstraint(20.0, 2.0)
    assert not os.path.exists(tmp_path / 'out')


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
