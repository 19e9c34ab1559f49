"""Opens the class-sized XLSX fixture with openpyxl and compares it with the CSV export."""

import csv
import subprocess
import sys
from pathlib import Path

import openpyxl


def main() -> int:
    unit_tests, out_dir = sys.argv[1], Path(sys.argv[2])
    subprocess.run([unit_tests, "--gtest_filter=Export.ClassSizedFixture"], check=True,
                   stdout=subprocess.DEVNULL)
    book = openpyxl.load_workbook(out_dir / "class_fixture.xlsx")
    sheet = book.worksheets[0]
    width = sheet.max_column
    xlsx_rows = [["" if v is None else str(v) for v in row]
                 for row in sheet.iter_rows(max_col=width, values_only=True)]
    with open(out_dir / "class_fixture.csv", newline="", encoding="utf-8") as f:
        csv_rows = [row + [""] * (width - len(row)) for row in csv.reader(f)]
    if sheet.title != "observations":
        print(f"unexpected sheet name {sheet.title!r}")
        return 1
    if xlsx_rows != csv_rows:
        for i, (a, b) in enumerate(zip(xlsx_rows, csv_rows)):
            if a != b:
                print(f"row {i}: xlsx={a} csv={b}")
                break
        print(f"{len(xlsx_rows)} xlsx rows, {len(csv_rows)} csv rows")
        return 1
    print(f"openpyxl read {len(xlsx_rows)} rows x {width} columns matching the CSV")
    return 0


if __name__ == "__main__":
    sys.exit(main())
