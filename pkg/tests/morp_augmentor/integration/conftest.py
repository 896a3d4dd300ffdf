import pytest

from tests.common import files_dir, manifest_path
from tests.morp_augmentor.common import MORP_CONFIG, dependencies, spill_scene


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    return repr(value)


@pytest.fixture
def config_file(tmp_path):
    lines = []
    for section, values in MORP_CONFIG.items():
        if not isinstance(values, dict):
            continue
        lines.append(f"[morp.{section}]")
        lines.extend(f"{key} = {_toml_value(value)}" for key, value in values.items())
    body = "\n".join(lines)
    header = f"seed = 7\n\n[morp]\nlarge_oil_fraction = {MORP_CONFIG['large_oil_fraction']}\n\n"
    path = tmp_path / "run.toml"
    path.write_text(header + body + "\n", encoding="utf-8")
    return path
