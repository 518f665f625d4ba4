"""evmscope: identify, rank and feasibility-filter money-related program
paths in EVM smart-contract bytecode."""

from .analyzers import PropertyId, PropertyViolation
from .cfg import Cfg, EdgeKind, build_cfg
from .disasm import ContractCode, disassemble, load_contract, parse_hex
from .pathgen import PathBounds, ProgramPath, enumerate_paths, filter_money
from .ranker import RankConfig, score
from .report import AnalysisConfig, Report, analyze

__all__ = [
    "AnalysisConfig",
    "Cfg",
    "ContractCode",
    "EdgeKind",
    "PathBounds",
    "ProgramPath",
    "PropertyId",
    "PropertyViolation",
    "RankConfig",
    "Report",
    "analyze",
    "build_cfg",
    "disassemble",
    "enumerate_paths",
    "filter_money",
    "load_contract",
    "parse_hex",
    "score",
]

__version__ = "0.1.0"
