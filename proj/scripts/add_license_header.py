#!/usr/bin/env python3
"""Prepend the license header to every C++ source that does not carry it yet."""
import pathlib
import sys

DIRS = ["include", "src", "tests", "tools", "bench"]


def main():
    header_path = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "/root/notes/license_header.txt")
    root = pathlib.Path(__file__).resolve().parent.parent
    header = header_path.read_text().rstrip("\n") + "\n\n"
    first = header.splitlines()[0]
    changed = 0
    for d in DIRS:
        for path in sorted((root / d).rglob("*")):
            if path.suffix not in (".hpp", ".cpp") or not path.is_file():
                continue
            text = path.read_text()
            if text.startswith(first):
                continue
            path.write_text(header + text)
            changed += 1
    print(f"headers added to {changed} files")


if __name__ == "__main__":
    main()
