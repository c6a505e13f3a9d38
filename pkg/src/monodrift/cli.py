# Copyright 2024 The monodrift authors

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import argparse

from .config import MAX_SEED, build_context, load_config, resolve_out_dir, validate_config
from .core import ConfigError, ExperimentRunner, MonodriftError, StudyError, StudyManager
from .core import EXIT_CONFIG_ERROR, EXIT_PASS, EXIT_RUNTIME_ERROR
from .core import get_monodrift_version


def seed_u64(value):
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got '{value}'")
    if not 0 <= seed <= MAX_SEED:
        raise argparse.ArgumentTypeError(f'seed must be an unsigned 64-bit integer, got {seed}')
    return seed


def positive_int(value):
    try:
        count = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got '{value}'")
    if count < 1:
        raise argparse.ArgumentTypeError(f'expected an integer >= 1, got {count}')
    return count


def run(active_studies, config_path, out=None, workers=1, seed=None, output_callback=print):
    """Load the configuration, run the given studies and write their outputs.

    Raises ConfigError for configurations that do not validate."""
    config = load_config(config_path, seed=seed)
    context = build_context(config, resolve_out_dir(out, config), workers)
    return ExperimentRunner(active_studies, context, output_callback).run()


def main():

    parser = argparse.ArgumentParser(
        description='Numerical verification studies for monotone stochastic evolution equations',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument('subcommand', nargs='?',
        help='Study to run (e.g. check-graph, lambda-study) or full-suite')
    parser.add_argument('--config', help='Experiment configuration (TOML)')
    parser.add_argument('--out', help='Output directory, overrides MONODRIFT_OUT and the configuration')
    parser.add_argument('--workers', type=positive_int, default=1,
        help='Worker processes for path-level parallelism')
    parser.add_argument('--seed', type=seed_u64, default=None,
        help='Override the ensemble seed of the configuration')
    parser.add_argument('--list-studies', action='store_true', help='List the installed studies and exit')
    parser.add_argument('--version', action='version',
        version='%(prog)s ' + get_monodrift_version())

    study_manager = StudyManager()
    default_args = {}
    study_manager.extend_cli_parser(parser, default_args)

    args = parser.parse_args()
    args_dict = vars(args)

    if args.list_studies:
        for name, study in study_manager.available_plugins.items():
            print('%s: %s' % (name.replace('_', '-'), '; '.join(study().statements())))
        return EXIT_PASS
    if not args.subcommand:
        parser.error('a subcommand is required, one of %s' % study_manager.subcommands())
    if args.subcommand not in study_manager.subcommands():
        parser.error("unknown subcommand '%s', expected one of %s" % (args.subcommand, study_manager.subcommands()))
    if not args.config:
        parser.error('--config is required')

    try:
        active_studies = study_manager.get_active_studies(args_dict)
    except StudyError as e:
        print(f"ERROR! {str(e)}")
        return EXIT_RUNTIME_ERROR
    print("Active studies %s" % [s.get_name() for s in active_studies])

    try:
        result = run(active_studies, args.config, args.out, args.workers, args.seed)
    except ConfigError as ex:
        print('ERROR: %s' % ex)
        for diagnostic in ex.diagnostics:
            print('ERROR: %s' % (diagnostic,))
        return EXIT_CONFIG_ERROR
    except MonodriftError as ex:
        print('ERROR: %s' % ex)
        return EXIT_RUNTIME_ERROR
    except Exception as ex:
        print('ERROR: unexpected %s: %s' % (type(ex).__name__, ex))
        return EXIT_RUNTIME_ERROR
    return result.exit_status


def validate_main():
    parser = argparse.ArgumentParser(description='Validate a monodrift experiment configuration')
    parser.add_argument('config')
    args = parser.parse_args()

    try:
        diagnostics = validate_config(args.config)
    except ConfigError as ex:
        diagnostics = ex.diagnostics or [str(ex)]
    except Exception as ex:
        print('ERROR: unexpected %s: %s' % (type(ex).__name__, ex))
        return EXIT_RUNTIME_ERROR
    for diagnostic in diagnostics:
        print(diagnostic)
    if diagnostics:
        return EXIT_CONFIG_ERROR
    print('%s: valid' % args.config)
    return EXIT_PASS
