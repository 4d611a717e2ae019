"""Validates every JSON config in a directory against the published schema."""
import json
import pathlib
import sys

import jsonschema


def main() -> int:
    schema_path, config_dir = pathlib.Path(sys.argv[1]), pathlib.Path(sys.argv[2])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    failures = 0
    configs = sorted(config_dir.glob("*.json"))
    for path in configs:
        errors = list(validator.iter_errors(json.loads(path.read_text())))
        for e in errors:
            print(f"{path.name}: {'/'.join(map(str, e.path))}: {e.message}")
        failures += bool(errors)
        print(f"{path.name}: {'ok' if not errors else 'INVALID'}")
    if not configs:
        print("no configs found")
        return 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
