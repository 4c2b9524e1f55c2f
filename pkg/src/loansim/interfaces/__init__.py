from .config import Settings, default_seed, dump_config, load_config
from .csvlog import COLUMNS, export_csv, read_csv

__all__ = [
    "Settings",
    "default_seed",
    "dump_config",
    "load_config",
    "COLUMNS",
    "export_csv",
    "read_csv",
]
