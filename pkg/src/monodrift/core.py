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

from collections import OrderedDict
import csv
from dataclasses import dataclass, field
import io
import math
import os
from pathlib import Path
import sys
import tempfile
import typing

# importlib-metadata dependency can be removed when 3.7 based systems are not in support cycles
if sys.version_info >= (3, 8):
    import importlib.metadata as importlib_metadata
else:
    import importlib_metadata

from .em import render_template

STUDY_ENTRY_POINT = 'monodrift.studies'
UNBOUNDED_TOKEN = 'unbounded'

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class MonodriftError(RuntimeError):
    pass


class Diagnostic(typing.NamedTuple):
    path: str
    message: str

    def __str__(self):
        return f'{self.path}: {self.message}' if self.path else self.message


class ConfigError(MonodriftError):
    """Raised when a configuration cannot be parsed or violates a rule.
    Every violation is kept in ``diagnostics`` with the field path it refers to."""
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class StudyError(MonodriftError):
    pass


class NumericalError(MonodriftError):
    pass


@dataclass
class CheckOutcome:
    """One pass/fail line of a study summary."""
    name: str
    passed: bool
    value: float = float('nan')
    detail: str = ''


@dataclass
class Table:
    """A CSV table produced by a study, written as ``<filename>`` in the output tree."""
    filename: str
    columns: typing.List[str]
    rows: typing.List[typing.Sequence] = field(default_factory=list)

    def append(self, *row):
        if len(row) != len(self.columns):
            raise ValueError('Row of length %d does not match columns %r' % (len(row), self.columns))
        self.rows.append(row)

    def to_csv(self, config_hash, study):
        buf = io.StringIO()
        buf.write(f'# config_hash={config_hash} study={study}\n')
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(v) for v in row])
        return buf.getvalue()


def format_cell(value):
    """Render a value for CSV. Floats use the shortest round-trip repr and
    non-finite values are replaced by the unbounded sentinel."""
    if hasattr(value, 'item') and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return UNBOUNDED_TOKEN
        return repr(value)
    return str(value)


@dataclass
class StudyOutcome:
    tables: typing.List[Table] = field(default_factory=list)
    checks: typing.List[CheckOutcome] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


@dataclass
class StudyResult:
    study: str
    files: typing.List[str]
    summary: str
    exit_status: int


class MonodriftStudy(object):
    """The base class for monodrift study plugins"""

    def invoke_after(self, cliargs) -> typing.Set[str]:
        """
        This study should run after the studies in the returned set. These
        studies are not required to be present, but if they are, they will
        run before this one.
        """
        return set()

    def required(self, cliargs) -> typing.Set[str]:
        """
        Ensures the specified studies are present and run together with
        this study. If the required study should run first, it should also
        be added to the `invoke_after` set.
        """
        return set()

    def statements(self) -> typing.List[str]:
        """Names of the results this study exercises, listed in the run log."""
        return []

    def run(self, context) -> StudyOutcome:
        raise NotImplementedError

    @staticmethod
    def get_name():
        raise NotImplementedError

    @classmethod
    def check_args_for_activation(cls, cli_args):
        """ Returns true if the arguments indicate that this study should be activated otherwise false.
        A study is active when the subcommand or its own flag names it, or when the full suite is requested."""
        subcommand = cli_args.get('subcommand')
        if subcommand == 'full-suite' or cli_args.get(cls.get_name()):
            return True
        return bool(subcommand) and subcommand.replace('-', '_') == cls.get_name()

    @staticmethod
    def register_arguments(parser, defaults):
        raise NotImplementedError


def name_to_argument(name):
    return '--%s' % name.replace('_', '-')


class StudyManager:
    def __init__(self):
        self.available_plugins = list_plugins()

    def extend_cli_parser(self, parser, default_args={}):
        for p in self.available_plugins.values():
            try:
                p.register_arguments(parser, default_args)
            except TypeError:
                print("Study %s doesn't support default arguments. Please extend it." % p.get_name())
                p.register_arguments(parser)
        parser.add_argument('--study-blacklist', nargs='*',
            default=[],
            help='Prevent any of these studies from being run.')
        parser.add_argument('--strict-study-selection', action='store_true',
            help='When enabled, causes an error if required studies are not explicitly '
            'selected. Otherwise, the required studies will automatically be run if available.')

    def subcommands(self):
        return sorted(name.replace('_', '-') for name in self.available_plugins) + ['full-suite']

    def get_active_studies(self, cli_args):
        """
        Checks for missing dependencies (specified by each study's
        required() method) and additionally sorts them.
        """
        def sort_studies(studies, cli_args):

            def topological_sort(source: typing.Dict[str, typing.Set[str]]) -> typing.List[str]:
                """Perform a topological sort on names and dependencies and returns the sorted list of names."""
                names = set(source.keys())
                # prune optional dependencies if they are not present (at this point the required check has already occurred)
                pending = [(name, dependencies.intersection(names)) for name, dependencies in source.items()]
                emitted = []
                while pending:
                    next_pending = []
                    next_emitted = []
                    for entry in pending:
                        name, deps = entry
                        deps.difference_update(emitted)
                        if deps:
                            next_pending.append(entry)
                        else:
                            yield name
                            next_emitted.append(name)
                    if not next_emitted:
                        raise StudyError("Cyclic dependency detected: %r" % (next_pending,))
                    pending = next_pending
                    emitted = next_emitted

            study_graph = {name: set(cls.invoke_after(cli_args)) for name, cls in sorted(studies.items())}
            return [studies[name] for name in topological_sort(study_graph)]

        blacklist = cli_args.get('study_blacklist') or []
        active_studies = {}
        find_reqs = set([name for name, cls in self.available_plugins.items() if cls.check_args_for_activation(cli_args)])
        if cli_args.get('subcommand') == 'full-suite':
            find_reqs.difference_update(blacklist)
        while find_reqs:
            name = find_reqs.pop()

            if name in self.available_plugins.keys():
                if name not in blacklist:
                    study = self.available_plugins[name]()
                    active_studies[name] = study
                else:
                    raise StudyError(f"Study '{name}' is blacklisted.")
            else:
                raise StudyError(f"Study '{name}' not found. Is it installed?")

            known_reqs = set(active_studies.keys()).union(find_reqs)
            missing_reqs = study.required(cli_args).difference(known_reqs)
            if missing_reqs:
                if cli_args.get('strict_study_selection'):
                    raise StudyError(f"Study '{name}' is missing required study(s) {list(missing_reqs)}")
                else:
                    print(f"Adding implicitly required study(s) {list(missing_reqs)} required by study '{name}'")
                    find_reqs = find_reqs.union(missing_reqs)

        return sort_studies(active_studies, cli_args)


def _atomic_write(full_path, contents):
    directory = os.path.dirname(full_path)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(full_path))
    try:
        with os.fdopen(fd, 'w', newline='') as fh:
            fh.write(contents)
        os.replace(tmp_path, full_path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_outputs(files, target_directory, output_callback=print):
    """Atomically write a mapping of relative path to text below target_directory.

    Returns the list of paths written, skipping absolute paths and paths that
    would escape the target directory."""
    written = []
    target = Path(target_directory).resolve()
    for file_path, contents in files.items():
        if os.path.isabs(file_path):
            if output_callback:
                output_callback('WARNING!! Path %s is absolute '
                                'and cannot be written out, skipping' % file_path)
            continue
        full_path = os.path.join(target_directory, file_path)
        if target not in Path(full_path).resolve().parents:
            if output_callback:
                output_callback('WARNING!! Path %s is outside target directory '
                                'and cannot be written out, skipping' % file_path)
            continue
        Path(os.path.dirname(full_path)).mkdir(exist_ok=True, parents=True)
        if output_callback:
            output_callback('Writing to file %s' % full_path)
        _atomic_write(full_path, contents)
        written.append(full_path)
    return written


class ExperimentRunner(object):
    """Runs the active studies against a prepared context and writes their outputs.

    ``context`` is any object exposing ``config_hash``, ``out_dir`` and
    whatever the studies read from it."""

    def __init__(self, active_studies, context, output_callback=print):
        self.active_studies = active_studies
        self.context = context
        self.output_callback = output_callback
        self.outcomes = OrderedDict()

    def _log(self, message):
        if self.output_callback:
            self.output_callback(message)

    def run(self):
        files = OrderedDict()
        for study in self.active_studies:
            name = study.get_name()
            statements = study.statements()
            self._log('Running study %s%s' % (name, (' exercising: ' + '; '.join(statements)) if statements else ''))
            outcome = study.run(self.context)
            self.outcomes[name] = outcome
            for table in outcome.tables:
                files[os.path.join(name, table.filename)] = table.to_csv(self.context.config_hash, name)
        summary = self.render_summary()
        files['summary.txt'] = summary
        written = write_outputs(files, self.context.out_dir, self.output_callback)
        self._log(summary)
        passed = all(o.passed for o in self.outcomes.values())
        return StudyResult(
            study=','.join(self.outcomes.keys()),
            files=written,
            summary=summary,
            exit_status=EXIT_PASS if passed else EXIT_CHECK_FAILED)

    def render_summary(self):
        rows = []
        for name, outcome in self.outcomes.items():
            for check in outcome.checks:
                rows.append({
                    'study': name,
                    'check': check.name,
                    'status': 'PASS' if check.passed else 'FAIL',
                    'value': format_cell(float(check.value)),
                    'detail': check.detail,
                })
        return render_template('summary.txt.em', {
            'config_hash': self.context.config_hash,
            'version': get_monodrift_version(),
            'rows': rows,
            'passed': all(o.passed for o in self.outcomes.values()),
        })


def list_plugins(extension_point=STUDY_ENTRY_POINT):

    all_entry_points = importlib_metadata.entry_points()
    if hasattr(all_entry_points, 'select'):
        studies = all_entry_points.select(group=extension_point)
    else:
        studies = all_entry_points.get(extension_point, [])

    unordered_plugins = {
        entry_point.name: entry_point.load()
        for entry_point in studies
    }
    # Order plugins by entry point name for consistent ordering below
    plugin_names = list(unordered_plugins.keys())
    plugin_names.sort()
    return OrderedDict([(k, unordered_plugins[k]) for k in plugin_names])


def get_monodrift_version():
    return importlib_metadata.version('monodrift')
