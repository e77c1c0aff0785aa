"""Coverage-guided greybox fuzzing for P4-14-style match-action programs.

The pipeline: :func:`parse_program` builds an IR, :func:`instrument_program`
adds the fp4 coverage header, :class:`Interpreter` plays the switch, and
:func:`run_campaign` drives generation, mutation and coverage tracking.
"""

from importlib import resources

from .analysis import (DepGraph, SeedTemplate, build_dependency_graph, enumerate_parser_paths,
                       mutable_fields_for_table, tables_for_seed)
from .control_plane import ControlPlane, parse_cp_script, serialize_cp_state
from .crc import crc32, crc_pop, crc_push
from .entries import TableConfig, TableEntry, hash_table_config, load_entries
from .errors import (ConfigError, CycleError, EffectError, EntryError, FrontendError,
                     HandlerDepthExceeded, LayoutOverflow, NoTemplates, P4FuzzError, P4ReferenceError,
                     P4SyntaxError, P4TypeError, RuntimeFault, ScriptError)
from .frontend import assign_stages, parse_assertions, parse_program
from .fuzz import CampaignConfig, CampaignStats, MutationConfig, prepare_campaign, run_campaign
from .instrument import Fp4HeaderLayout, InstrumentedIR, instrument, instrument_program
from .interpreter import Interpreter, SwitchState, run_pipeline
from .packet import Packet, parse_packet, serialize_packet
from .report import CampaignReport

__version__ = "0.1.0"

FIXTURES = ("running_example", "load_balancer", "rate_limiter", "firewall", "mirroring",
            "dv_router", "magic32", "vlan")


def fixture_path(name: str):
    """Path of a bundled fixture file, e.g. ``fixture_path("mirroring.p4")``."""
    return resources.files(__package__) / "fixtures" / name


def fixture_text(name: str) -> str:
    return fixture_path(name).read_text()


__all__ = [
    "CampaignConfig", "CampaignReport", "CampaignStats", "ConfigError", "ControlPlane", "CycleError",
    "DepGraph", "EffectError", "EntryError", "FIXTURES", "Fp4HeaderLayout", "FrontendError",
    "HandlerDepthExceeded", "InstrumentedIR", "Interpreter", "LayoutOverflow", "MutationConfig",
    "NoTemplates", "P4FuzzError", "P4ReferenceError", "P4SyntaxError", "P4TypeError", "Packet",
    "RuntimeFault", "ScriptError", "SeedTemplate", "SwitchState", "TableConfig", "TableEntry",
    "assign_stages", "build_dependency_graph", "crc32", "crc_pop", "crc_push", "enumerate_parser_paths",
    "fixture_path", "fixture_text", "hash_table_config", "instrument", "instrument_program",
    "load_entries", "mutable_fields_for_table", "parse_assertions", "parse_cp_script", "parse_packet",
    "parse_program", "prepare_campaign", "run_campaign", "run_pipeline", "serialize_cp_state",
    "serialize_packet", "tables_for_seed",
]
