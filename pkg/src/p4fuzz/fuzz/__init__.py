"""Fuzzer engine: corpus, mutation, coverage tracking and the campaign loop."""

from .campaign import (Campaign, CampaignStats, CoveragePoint, Promote, Recycle, Violation,
                       ViolationRecord, fuzz, prepare_campaign, process_result, run_campaign)
from .config import CampaignConfig, MutationConfig, config_from_mapping, load_config, parse_config_text
from .corpus import SeedPacket, generate_packet, init_corpus
from .coverage import BloomFilter, CoverageTracker
from .magic import MagicValueStore, register_table_entry
from .mutate import Mutator, mutate

__all__ = [
    "BloomFilter", "Campaign", "CampaignConfig", "CampaignStats", "CoveragePoint", "CoverageTracker",
    "MagicValueStore", "MutationConfig", "Mutator", "Promote", "Recycle", "SeedPacket", "Violation",
    "ViolationRecord", "config_from_mapping", "fuzz", "generate_packet", "init_corpus", "load_config",
    "mutate", "parse_config_text", "prepare_campaign", "process_result", "register_table_entry",
    "run_campaign",
]
