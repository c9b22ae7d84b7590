from .config import ExperimentConfig, get_config_options, load_config, write_config, read_config_file, env_overrides
from .config import PRESETS, PAPER_PRESET, PAPER_CE_PRESET
from .report import ReportRow, rows_from_metrics, summarise, write_tsv, read_report, format_markdown, emit_report
from .report import write_summary_tsv
from .experiment import Experiment, WarmupResult, DistillResult, run_seeds, check_orderings, model_seed
