"""Python bindings for the kgx rule-explanation workbench."""

from ._core import (
    KgxError,
    Rule,
    TripleStore,
    bleu,
    compute_metrics,
    krippendorff_alpha,
    meteor,
    mine_rules,
    parse_rule,
    rouge_l,
    run_cli,
    spearman,
)

__all__ = [
    "KgxError",
    "Rule",
    "TripleStore",
    "bleu",
    "compute_metrics",
    "krippendorff_alpha",
    "meteor",
    "mine_rules",
    "parse_rule",
    "rouge_l",
    "run_cli",
    "spearman",
]
__version__ = "0.1.0"
