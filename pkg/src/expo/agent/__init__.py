from .domain_gen import DomainGenerationError, generate_domain
from .parsers import ParseError, parse_mab_dist, parse_trace, parse_wb
from .prompts import load_template, render_mab_summary
from .providers import (
    BanditSolver,
    EchoProvider,
    LinearRegressionSolver,
    ProviderError,
    RemoteProvider,
    ScriptedProvider,
    ScriptedRephraser,
    TableProvider,
    TranscriptProvider,
    TspSolver,
    complete,
)

__all__ = [
    "BanditSolver", "DomainGenerationError", "EchoProvider", "LinearRegressionSolver", "ParseError",
    "ProviderError", "RemoteProvider", "ScriptedProvider", "ScriptedRephraser", "TableProvider", "TranscriptProvider", "TspSolver",
    "complete", "generate_domain", "load_template", "parse_mab_dist", "parse_trace", "parse_wb",
    "render_mab_summary",
]
