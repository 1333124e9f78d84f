"""Benchmark commands: run, verify, sweep and xi-trace.

Experiment files are JSON:

    {
      "problem": {"type": "quadratic", "dim": 10, "mu": 0.01, "L": 1.0},
      "solvers": [{"mode": "rgd"}, {"mode": "euclid_nesterov", "name": "nesterov"}],
      "seed": 0,
      "max_iters": 300,
      "emit": "csv"
    }

Traces are written as CSV with a fixed column order (TRACE_COLUMNS); a
``manifest.json`` next to them records the config hash, library version and
seed. Nothing time-dependent is written, so identical inputs give
byte-identical files.
"""
import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import wraps

import click
import numpy as np

from config import Config
from modules.errors import ConfigError, DomainError, RagdError
from modules.problems import build_problem
from modules.solvers import SolverConfig, SolverMode, TraceRow, run_with_containment
from modules.suites import SUITES, run_suites
from modules.xi_solver import XiParams, contraction_factor, fixed_point_xi, iterate_xi, recursion_residual

logger = logging.getLogger(__name__)

TRACE_COLUMNS = TraceRow._fields
SWEEP_COLUMNS = ('axis', 'value', 'solver', 'empirical_rate', 'predicted_rate', 'fixed_point_xi',
                 'terminal_xi', 'iters_to_eps', 'final_gap')
XI_TRACE_COLUMNS = ('t', 'xi', 'residual', 'gap_to_fixed_point', 'envelope')
AXES = ('gamma', 'condition_number', 'curvature', 'delta_const')
EMIT = ('csv', 'json', 'both')
XI_EPS = 1e-3

EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


@dataclass
class ExperimentConfig:
    problem: dict
    solvers: list
    seed: int = 0
    output: str = Config.OUTPUT_DIR
    emit: str = 'csv'
    max_iters: int = 100
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self):
        canonical = json.dumps(dict(self.raw, seed=self.seed), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def parse_experiment(data, seed=None, out=None):
    if not isinstance(data, dict):
        raise ConfigError('experiment config must be a JSON object')
    problem = data.get('problem')
    if not isinstance(problem, dict):
        raise ConfigError('experiment config needs a "problem" object')
    solvers = data.get('solvers')
    if not isinstance(solvers, list) or not solvers:
        raise ConfigError('experiment config needs a non-empty "solvers" list')
    for s in solvers:
        if not isinstance(s, dict) or s.get('mode') not in {m.value for m in SolverMode}:
            raise ConfigError(f'solver entry {s!r} has no valid "mode"')
    emit = data.get('emit', 'csv')
    if emit not in EMIT:
        raise ConfigError(f'emit must be one of {EMIT}, got {emit!r}')
    try:
        seed = int(data.get('seed', Config.DEFAULT_SEED) if seed is None else seed)
        max_iters = int(data.get('max_iters', 100))
    except (TypeError, ValueError) as e:
        raise ConfigError(f'bad integer field: {e}') from e
    output = out or data.get('output', Config.OUTPUT_DIR)
    return ExperimentConfig(problem, solvers, seed, output, emit, max_iters, raw=data)


def load_experiment(path, seed=None, out=None):
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f'cannot read experiment config {path}: {e}') from e
    return parse_experiment(data, seed, out)


def solver_config(entry, problem, default_iters):
    """SolverConfig for one solver entry; mu and L default to the problem's."""
    try:
        return SolverConfig(
            mode=entry['mode'],
            mu=float(entry.get('mu', problem.mu)),
            L=float(entry.get('L', problem.L)),
            gamma=entry.get('gamma'),
            xi0=float(entry.get('xi0', 1.0)),
            max_iters=int(entry.get('max_iters', default_iters)),
            delta_const=entry.get('delta_const'),
            rate=entry.get('rate', 'improved'),
        )
    except (DomainError, TypeError, ValueError) as e:
        raise ConfigError(f'invalid solver entry {entry!r}: {e}') from e


def solver_names(solvers):
    names, seen = [], {}
    for s in solvers:
        base = s.get('name', s['mode'])
        seen[base] = seen.get(base, 0) + 1
        names.append(base if seen[base] == 1 else f'{base}_{seen[base]}')
    return names


def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def trace_csv(trace):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(TRACE_COLUMNS)
    for row in trace.rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_float(value):
    return None if value is None or not math.isfinite(value) else float(value)


def trace_json(trace, meta):
    rows = [dict(zip(TRACE_COLUMNS, [r.t] + [_json_float(v) for v in r[1:]])) for r in trace.rows]
    payload = dict(meta, columns=list(TRACE_COLUMNS), rows=rows, warnings=list(trace.warnings))
    return json.dumps(payload, indent=2, sort_keys=True) + '\n'


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def estimate_rate(f_gaps):
    """Least-squares slope of log f_gap over the trailing half of the resolved run.

    The run is cut at the first row at or below 1e2 * eps * initial gap (or
    non-finite); past that point the gap is rounding noise.
    """
    gaps = np.asarray(f_gaps, dtype=float)
    if len(gaps) < 4 or not gaps[0] > 0:
        return math.nan
    floor = 1e2 * np.finfo(float).eps * gaps[0]
    floored = np.flatnonzero(~(np.isfinite(gaps) & (gaps > floor)))
    end = int(floored[0]) if len(floored) else len(gaps)
    start = end // 2
    if end - start < 2:
        return math.nan
    t = np.arange(start, end)
    slope, _ = np.polyfit(t, np.log(gaps[start:end]), 1)
    return float(slope)


def predicted_xi(trace):
    """Fixed point xi(delta) for the mean rate over the trailing half; 2 mu Delta for rgd."""
    config = trace.config
    a = config.a
    if config.mode is SolverMode.RGD:
        return a
    deltas = trace.column('delta_rate')
    delta = float(np.mean(deltas[len(deltas) // 2:]))
    if a == 0:
        return 0.0
    return fixed_point_xi(XiParams(a, max(delta, 1.0)))


def iterations_to_eps(xis, target, eps=XI_EPS):
    for t, xi in enumerate(xis):
        if t > 0 and abs(xi - target) <= eps:
            return t
    return -1


def summarize(name, trace):
    xi_hat = predicted_xi(trace)
    return {
        'solver': name,
        'final_gap': _json_float(trace.final_gap),
        'empirical_rate': _json_float(estimate_rate(trace.column('f_gap'))),
        'predicted_rate': _json_float(math.log1p(-xi_hat)) if xi_hat < 1 else None,
        'fixed_point_xi': xi_hat,
        'terminal_xi': trace.rows[-1].xi,
        'iters_to_eps': iterations_to_eps(trace.column('xi'), xi_hat),
        'warnings': list(trace.warnings),
    }


def run_experiment(exp):
    """Run every solver of an experiment; returns (name, trace) pairs."""
    try:
        problem = build_problem(exp.problem, seed=exp.seed)
    except DomainError as e:
        raise ConfigError(f'invalid problem description: {e}') from e
    configs = [solver_config(s, problem, exp.max_iters) for s in exp.solvers]
    results = []
    for name, config in zip(solver_names(exp.solvers), configs):
        logger.info('running %s (%s) on %s', name, config.mode.value, exp.problem.get('type'))
        results.append((name, run_with_containment(problem, config)))
    return results


def write_run(exp, results):
    meta = {'config_hash': exp.config_hash, 'version': Config.VERSION, 'seed': exp.seed}
    files = []
    for name, trace in results:
        if exp.emit in ('csv', 'both'):
            path = os.path.join(exp.output, f'{name}.csv')
            write_atomic(path, trace_csv(trace))
            files.append(path)
        if exp.emit in ('json', 'both'):
            path = os.path.join(exp.output, f'{name}.json')
            write_atomic(path, trace_json(trace, dict(meta, solver=name)))
            files.append(path)
    manifest = dict(meta, columns=list(TRACE_COLUMNS),
                    files=[os.path.basename(f) for f in files],
                    summary=[summarize(name, trace) for name, trace in results])
    write_atomic(os.path.join(exp.output, 'manifest.json'), json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    return files, manifest['summary']


def exit_codes(fn):
    """Map library errors to the documented exit codes."""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            click.echo(f'❌ config error: {e}', err=True)
            ctx.exit(EXIT_CONFIG)
        except RagdError as e:
            click.echo(f'❌ {type(e).__name__}: {e}', err=True)
            ctx.exit(EXIT_SOLVER)
    return wrapper


def _fmt_cell(value):
    if value is None:
        return '-'
    if isinstance(value, float):
        return f'{value:.4g}'
    return str(value)


@click.command('run')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='experiment JSON')
@click.option('--seed', type=int, default=None, help='overrides the seed in the config')
@click.option('--out', type=click.Path(file_okay=False), default=None, help='output directory')
@exit_codes
def run_cmd(config_path, seed, out):
    """Run every solver of an experiment and write one trace per solver."""
    exp = load_experiment(config_path, seed, out)
    results = run_experiment(exp)
    files, summary = write_run(exp, results)
    click.echo(f'{"solver":<20} {"final gap":>12} {"emp. rate":>12} {"pred. rate":>12} {"xi(delta)":>10}')
    for s in summary:
        click.echo(f'{s["solver"]:<20} {_fmt_cell(s["final_gap"]):>12} {_fmt_cell(s["empirical_rate"]):>12} '
                   f'{_fmt_cell(s["predicted_rate"]):>12} {_fmt_cell(s["fixed_point_xi"]):>10}')
        for w in s['warnings']:
            click.echo(f'⚠️  {s["solver"]}: {w}')
    click.echo(f'✅ wrote {len(files)} trace file(s) to {exp.output}')


@click.command('verify')
@click.option('--suite', type=click.Choice(list(SUITES) + ['all']), default='all')
@click.option('--seed', type=int, default=Config.DEFAULT_SEED)
@click.option('--scale', type=float, default=1.0, help='multiplier on the sample counts')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), default=None,
              help='write the JSON report here instead of stdout')
@exit_codes
def verify_cmd(suite, seed, scale, report_path):
    """Run property suites; exit 1 if any check fails."""
    reports = run_suites(suite, seed, scale)
    payload = json.dumps({'seed': seed, 'suites': [r.to_dict() for r in reports]}, indent=2, sort_keys=True)
    for r in reports:
        for c in r.checks:
            mark = '✅' if c.passed else '❌'
            click.echo(f'{mark} {r.name}: {c.name} ({c.samples} samples, {c.failures} failures)', err=True)
    if report_path:
        write_atomic(report_path, payload + '\n')
    else:
        click.echo(payload)
    if not all(r.passed for r in reports):
        click.get_current_context().exit(EXIT_VIOLATION)


def apply_axis(raw, axis, value):
    """Experiment dict with one sweep value applied."""
    data = json.loads(json.dumps(raw))
    problem = data['problem']
    if axis == 'gamma':
        for s in data['solvers']:
            s['gamma_factor'] = value
    elif axis == 'condition_number':
        if problem.get('type') != 'quadratic':
            raise ConfigError('condition_number sweeps need a quadratic problem')
        problem['mu'] = value * float(problem['L'])
        problem.pop('H', None)
    elif axis == 'curvature':
        manifold = problem.get('manifold', {})
        key = {'hyperbolic': 'kappa', 'spd': 'kappa', 'sphere': 'sigma'}.get(manifold.get('kind'))
        if key is None:
            raise ConfigError('curvature sweeps need a curved manifold')
        manifold[key] = value
        for stale in ('anchors', 'initial'):
            problem.pop(stale, None)
    elif axis == 'delta_const':
        for s in data['solvers']:
            if s['mode'] == SolverMode.RAGD_CONSTANT_DELTA.value:
                s['delta_const'] = value
    else:
        raise ConfigError(f'unknown sweep axis {axis!r}')
    return data


def sweep_point(raw, axis, index, value, seed, parts_dir):
    """Run one sweep point and write its rows atomically; returns the part path."""
    exp = parse_experiment(apply_axis(raw, axis, value), seed)
    try:
        problem = build_problem(exp.problem, seed=exp.seed)
    except DomainError as e:
        raise ConfigError(f'invalid problem at {axis}={value}: {e}') from e
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    for name, entry in zip(solver_names(exp.solvers), exp.solvers):
        if 'gamma_factor' in entry:
            entry = dict(entry, gamma=float(entry['gamma_factor']) / float(entry.get('L', problem.L)))
        trace = run_with_containment(problem, solver_config(entry, problem, exp.max_iters))
        s = summarize(name, trace)
        writer.writerow([axis, _fmt(value), name] + [
            'nan' if s[k] is None else _fmt(s[k])
            for k in ('empirical_rate', 'predicted_rate', 'fixed_point_xi', 'terminal_xi', 'iters_to_eps', 'final_gap')])
    path = os.path.join(parts_dir, f'point_{index:04d}.csv')
    write_atomic(path, buf.getvalue())
    return path


def _sweep_task(args):
    return sweep_point(*args)


def parse_values(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ConfigError(f'bad --values list {text!r}') from e


@click.command('sweep')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False))
@click.option('--axis', required=True, type=click.Choice(AXES))
@click.option('--values', 'values_text', required=True, help='comma-separated axis values')
@click.option('--seed', type=int, default=None)
@click.option('--out', type=click.Path(file_okay=False), default=None)
@click.option('--workers', type=int, default=Config.SWEEP_WORKERS, help='parallel sweep points')
@exit_codes
def sweep_cmd(config_path, axis, values_text, seed, out, workers):
    """Re-run an experiment over one axis and aggregate rates into one CSV."""
    exp = load_experiment(config_path, seed, out)
    values = parse_values(values_text)
    if not values:
        raise ConfigError('--values is empty')
    parts_dir = os.path.join(exp.output, f'sweep_{axis}_parts')
    tasks = [(exp.raw, axis, i, v, exp.seed, parts_dir) for i, v in enumerate(values)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_task, tasks))
    else:
        parts = [_sweep_task(t) for t in tasks]
    lines = [','.join(SWEEP_COLUMNS) + '\n']
    for part in parts:
        with open(part, encoding='utf-8') as fh:
            lines.append(fh.read())
    target = os.path.join(exp.output, f'sweep_{axis}.csv')
    write_atomic(target, ''.join(lines))
    for part in parts:
        os.remove(part)
    os.rmdir(parts_dir)
    click.echo(f'✅ {len(values)} sweep point(s) written to {target}')


def xi_trace_rows(a, delta, xi0, steps):
    p = XiParams(a, delta)
    target, q = fixed_point_xi(p), contraction_factor(p)
    xs = iterate_xi(xi0, p, steps)
    rows = []
    for t, xi in enumerate(xs):
        residual = 0.0 if t == 0 else recursion_residual(xi, xs[t - 1], p)
        rows.append((t, xi, residual, abs(xi - target), q ** t * abs(xi0 - target)))
    return rows


@click.command('xi-trace')
@click.option('--a', 'a', required=True, type=float, help='2 mu Delta, in (0, 1)')
@click.option('--delta', default=1.0, type=float, show_default=True)
@click.option('--xi0', required=True, type=float)
@click.option('--steps', default=20, type=int, show_default=True)
@exit_codes
def xi_trace_cmd(a, delta, xi0, steps):
    """Print the xi staircase as CSV."""
    try:
        rows = xi_trace_rows(a, delta, xi0, steps)
    except DomainError as e:
        raise ConfigError(str(e)) from e
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(XI_TRACE_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    click.echo(buf.getvalue(), nl=False)


COMMANDS = (run_cmd, verify_cmd, sweep_cmd, xi_trace_cmd)
