from __future__ import annotations

import random
import sys
from dataclasses import dataclass

import pytest

from p4fuzz import fixture_text, instrument_program, load_entries, parse_program
from p4fuzz.analysis import enumerate_parser_paths
from p4fuzz.entries import TableConfig
from p4fuzz.fuzz.corpus import random_values
from p4fuzz.instrument import InstrumentedIR
from p4fuzz.ir import ProgramIR
from p4fuzz.packet import Packet

ALL_FIXTURES = ("running_example", "load_balancer", "rate_limiter", "firewall", "mirroring",
                "dv_router", "magic32", "vlan")
COVERAGE_FIXTURES = ("running_example", "load_balancer", "rate_limiter", "firewall", "mirroring")


@dataclass
class Loaded:
    name: str
    ir: ProgramIR
    iir: InstrumentedIR
    config: TableConfig  # for the instrumented program
    plain_config: TableConfig  # for the uninstrumented program
    entries_text: str

    def random_packet(self, rng: random.Random) -> Packet:
        t = rng.choice(self.templates)
        return Packet(list(t.headers), random_values(t, self.ir.field_widths(), rng))

    @property
    def templates(self):
        if not hasattr(self, "_templates"):
            self._templates = enumerate_parser_paths(self.ir)
        return self._templates


_CACHE: dict[str, Loaded] = {}


def load(name: str) -> Loaded:
    if name not in _CACHE:
        ir = parse_program(fixture_text(f"{name}.p4"))
        iir = instrument_program(ir)
        text = fixture_text(f"{name}.entries")
        _CACHE[name] = Loaded(name, ir, iir, load_entries(text, iir.program, iir.action_aliases()),
                              load_entries(text, ir), text)
    return _CACHE[name]


@pytest.fixture
def running():
    return load("running_example")


@pytest.fixture
def rng():
    return random.Random(1234)


def fixture_settings(name: str, **overrides):
    """The shipped ``<name>.conf`` with field overrides applied."""
    from dataclasses import replace

    from p4fuzz import fixture_path
    from p4fuzz.fuzz import load_config

    return replace(load_config(fixture_path(f"{name}.conf")), **overrides).validate()


def run_fixture(name: str, **overrides):
    from p4fuzz.fuzz import fuzz

    return fuzz(fixture_settings(name, **overrides))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in mod.RESULTS.values():
        terminalreporter.write_line(line)
