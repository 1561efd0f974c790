import os
import json

import numpy as np
from rich.console import Console
from rich.table import Table

console = Console()


class NoneAttrs:
    def __getattr__(self, _name):
        return None


def make_rng(seed):
    return np.random.default_rng(seed)


def print_status_message(success, message, style=None):
    if style is None:
        style = "bold green" if success else "bold red"
    console.print(message, style=style)
    print("")


def print_table(title, columns, rows):
    table = Table(title=title)
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*[str(value) for value in row])
    console.print(table)


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(filepath, data):
    with open(filepath, "w") as f:
        json.dump(to_jsonable(data), f, indent=4)
    return filepath


def ensure_dir(dirpath):
    if not os.path.exists(dirpath):
        os.makedirs(dirpath)
    return dirpath

