"""Python bindings for clarifykit."""

from ._core import (
    ClarifyError,
    ParseError,
    PreconditionError,
    build_mutation_prompt,
    build_question_prompt,
    cohen_kappa,
    compute_metrics,
    compute_ratio,
    entropy,
    extract_code,
    find_original_leak,
    mix_records,
    parse_binary_label,
    render_report,
    run_cli,
    run_tests,
    significance_test,
    stars_for,
    target_counts,
    tokenize,
    unigram_perplexity,
    version,
)

__version__ = version()

__all__ = [
    "ClarifyError",
    "ParseError",
    "PreconditionError",
    "build_mutation_prompt",
    "build_question_prompt",
    "cohen_kappa",
    "compute_metrics",
    "compute_ratio",
    "entropy",
    "extract_code",
    "find_original_leak",
    "mix_records",
    "parse_binary_label",
    "render_report",
    "run_cli",
    "run_tests",
    "significance_test",
    "stars_for",
    "target_counts",
    "tokenize",
    "unigram_perplexity",
    "version",
]

