import argparse
import dataclasses
import logging
import os
import sys

from dhtsmc.core.control import stability_margin
from dhtsmc.core.exception import (InvalidParamsError, NoConvergence,
                                   OutputError, SingularInertia)
from dhtsmc.core.scenario import load_scenario
from dhtsmc.core.simulation import compute_metrics, run_simulation
from dhtsmc.sandbox.run_outputs import (emit_outputs, format_metrics,
                                        format_stability_report,
                                        write_comparison, write_reference)

# Module logger
log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_COMPLIANT = 2
EXIT_RUNTIME = 3


def parse_args(args):
    """Check input arguments"""

    # CLI args
    description = 'Simulates the sliding-mode controllers on a scenario'
    parser = argparse.ArgumentParser(prog='dhtsmc', description=description)
    parser.add_argument('--logging_level', type=str, default='WARNING',
                        help='the logging level to use (DEBUG, INFO, WARNING, '
                             'ERROR).')
    commands = parser.add_subparsers(dest='command', required=True)

    def add_command(name, help_text, out=True, seed=True, plot=False):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument('scenario', type=str,
                         help='path to a scenario file or a preset name '
                              '(sim-paper, exp-paper, eta-sweep).')
        if out:
            sub.add_argument('--out', type=str, default='out',
                             help='directory where to write the output.')
        if seed:
            sub.add_argument('--seed', type=int, default=None,
                             help='overrides the seed of the scenario.')
        if plot:
            sub.add_argument('--plot', action='store_true',
                             help='also save figures of the errors.')
        return sub

    sub = add_command('simulate', 'run one controller', plot=True)
    sub.add_argument('--controller', type=str, default='dhtsmc',
                     choices=['dhtsmc', 'ff-tsmc'],
                     help='the controller to simulate.')
    add_command('compare', 'run all controllers of the scenario', plot=True)
    add_command('check-stability', 'check the gains against the stability '
                                   'bound', out=False, seed=False)
    add_command('plan', 'write the reference trajectory only', seed=False)
    add_command('sweep-eta', 'run DHTSMC for every run.eta_values')

    args = parser.parse_args(args)

    level = getattr(logging, args.logging_level.upper(), None)
    if not isinstance(level, int):
        raise InvalidParamsError(f'unknown logging level '
                                 f'{args.logging_level}')

    out = dict(vars(args))
    out['logging_level'] = level
    if 'out' in out:
        out['out'] = os.path.abspath(out['out'])
    return out


def _stability(scenario):
    return stability_margin(scenario.controller, scenario.ddq_range,
                            E_bound=scenario.run['E_bound'])


def simulate(scenario, controller, out, seed=None, plot=False):
    trace = run_simulation(scenario, controller, seed=seed)
    metrics = compute_metrics(trace, scenario.nominal)
    emit_outputs(trace, metrics, out, stability=_stability(scenario),
                 model=scenario.nominal)
    if plot:
        from dhtsmc.sandbox.graphics import save_run_figures
        save_run_figures({controller: trace}, scenario.nominal, out)
    print(format_metrics(metrics, title=f'{controller} on {scenario.name}'))
    return trace, metrics


def compare(scenario, out, seed=None, plot=False):
    traces, metrics = {}, {}
    for controller in scenario.run['controllers']:
        traces[controller], metrics[controller] = simulate(
            scenario, controller, os.path.join(out, controller), seed=seed)
    df = write_comparison(metrics, out)
    if plot:
        from dhtsmc.sandbox.graphics import save_run_figures
        save_run_figures(traces, scenario.nominal, out)
    print(df.to_string(index=False))
    return metrics


def sweep_eta(scenario, out, seed=None):
    rows = {}
    for eta in scenario.run['eta_values']:
        scenario.controller = dataclasses.replace(scenario.controller,
                                                  eta=float(eta))
        trace = run_simulation(scenario, 'dhtsmc', seed=seed)
        rows[f'eta={float(eta):g}'] = compute_metrics(trace, scenario.nominal)
    df = write_comparison(rows, out)
    os.replace(os.path.join(out, 'comparison.csv'),
               os.path.join(out, 'eta_sweep.csv'))
    print(df.to_string(index=False))
    return rows


def run_cli(args):
    """Run one command; returns the exit code."""
    try:
        kwargs = parse_args(args)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    except InvalidParamsError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=kwargs['logging_level'],
                        format='%(asctime)s %(name)s %(levelname)s: '
                               '%(message)s')
    command = kwargs['command']
    try:
        scenario = load_scenario(kwargs['scenario'])
        if kwargs.get('seed') is not None:
            scenario.run['seed'] = kwargs['seed']
    except (OSError, InvalidParamsError) as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE

    try:
        if command == 'check-stability':
            report = _stability(scenario)
            print(format_stability_report(report), end='')
            return EXIT_OK if report.compliant else EXIT_NOT_COMPLIANT
        elif command == 'plan':
            path = write_reference(scenario.trajectory, kwargs['out'])
            print(f'reference written to {path}')
        elif command == 'simulate':
            simulate(scenario, kwargs['controller'], kwargs['out'],
                     plot=kwargs['plot'])
        elif command == 'compare':
            compare(scenario, kwargs['out'], plot=kwargs['plot'])
        elif command == 'sweep-eta':
            sweep_eta(scenario, kwargs['out'])
        else:
            raise NotImplementedError(f'{command}')
    except InvalidParamsError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except (SingularInertia, NoConvergence, FloatingPointError,
            OutputError) as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == '__main__':
    main()
