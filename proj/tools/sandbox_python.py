#!/usr/bin/env python3
"""Runs one generated imputation program against one CSV file.

usage: sandbox_python.py PROGRAM INPUT_CSV OUTPUT_CSV

The program runs with `input_csv`, `output_csv` and `pd` in scope. If it defines
impute_missing_value(df), that function is called on the input and its result is
written to OUTPUT_CSV. Otherwise the program must write OUTPUT_CSV itself, or
imputed.csv in the working directory.
"""
import os
import shutil
import sys

import pandas as pd

_read_csv = pd.read_csv


def read_csv_exact(*args, **kwargs):
    # The default C parser can be off by one ulp; untouched cells must survive bit-for-bit.
    kwargs.setdefault("float_precision", "round_trip")
    return _read_csv(*args, **kwargs)


pd.read_csv = read_csv_exact


def main(argv):
    if len(argv) != 4:
        sys.exit(__doc__)
    program_path, input_csv, output_csv = argv[1:4]
    with open(program_path) as f:
        source = f.read()
    scope = {"__name__": "__sandbox__", "input_csv": input_csv, "output_csv": output_csv, "pd": pd}
    exec(compile(source, program_path, "exec"), scope)

    fn = scope.get("impute_missing_value")
    if callable(fn):
        df = fn(pd.read_csv(input_csv))
        df.to_csv(output_csv, index=False)
    elif not os.path.exists(output_csv):
        if not os.path.exists("imputed.csv"):
            sys.exit("program wrote no output")
        shutil.move("imputed.csv", output_csv)


if __name__ == "__main__":
    main(sys.argv)
