"""Pre-commit checks for bundled data, local links and module compilation."""

import json
import re
from pathlib import Path
from typing import List, Tuple

import pytest

ROOT = Path(__file__).parent.parent
PACKAGE = ROOT / "askgrid"


def find_markdown_files() -> List[Path]:
    """Find all markdown files in the project."""
    excluded = {".git", "node_modules", ".venv", "venv", "__pycache__", "examples"}
    return [
        f
        for f in ROOT.glob("**/*.md")
        if not any(part.startswith(".") or part in excluded for part in f.relative_to(ROOT).parts)
    ]


def extract_local_links(file_path: Path) -> List[str]:
    """Extract relative link targets of ``[text](target)`` links, without anchors."""
    content = file_path.read_text(encoding="utf-8", errors="ignore")
    links = []
    for target in re.findall(r"\[[^\]]*\]\(([^)\s]+)\)", content):
        if re.match(r"^[a-z]+:", target) or target.startswith("#"):
            continue
        links.append(target.split("#", 1)[0])
    return links


def find_python_files() -> List[Path]:
    """Find all Python files in the askgrid package."""
    return [p for p in PACKAGE.rglob("*.py") if "__pycache__" not in p.parts]


def compile_source(py_file: Path) -> Tuple[bool, str]:
    """Compile a Python file without importing it."""
    try:
        compile(py_file.read_text(encoding="utf-8"), str(py_file), "exec")
    except SyntaxError as e:
        return False, "line {}: {}".format(e.lineno, e.msg)
    return True, ""


class TestLocalLinks:
    """Test for broken relative links in markdown files."""

    def test_no_broken_links(self):
        """Check that relative links in markdown files point at existing files."""
        md_files = find_markdown_files()
        if not md_files:
            pytest.skip("No markdown files found")

        broken = []
        for md_file in md_files:
            for target in extract_local_links(md_file):
                if target and not (md_file.parent / target).exists():
                    broken.append("{} in {}".format(target, md_file.relative_to(ROOT)))

        if broken:
            pytest.fail("Found {} broken link(s):\n".format(len(broken)) + "\n".join("  - " + b for b in broken))


class TestCompilation:
    """Test that all Python files compile."""

    def test_all_files_compile(self):
        """Check that every module in askgrid/ compiles."""
        failed = []
        for py_file in find_python_files():
            ok, error = compile_source(py_file)
            if not ok:
                failed.append("{}: {}".format(py_file.name, error))

        if failed:
            pytest.fail("Failed to compile {} file(s):\n".format(len(failed)) + "\n".join("  - " + f for f in failed))


class TestBundledData:
    """Test the templates and seed lists shipped with the package."""

    def test_template_per_env_kind(self):
        """Check that every environment kind has a prompt template with valid exemplar plans."""
        from askgrid.gridworld import EnvKind
        from askgrid.planner import load_template, parse_plan

        problems = []
        for kind in EnvKind:
            path = PACKAGE / "templates" / "{}.json".format(kind.value)
            if not path.is_file():
                problems.append("missing {}".format(path.name))
                continue
            for example in load_template(kind)["exemplars"]:
                parse_plan(example["plan"])
                if not example.get("reasoning"):
                    problems.append("{}: exemplar without reasoning".format(path.name))

        if problems:
            pytest.fail("\n".join(problems))

    def test_held_out_seeds(self):
        """Check that every kind has 100 distinct held-out seeds and nothing else is listed."""
        from askgrid.config import DEFAULT_TRAINING_SEEDS
        from askgrid.gridworld import EnvKind

        table = json.loads((PACKAGE / "data" / "test_seeds.json").read_text(encoding="utf-8"))
        assert set(table) == {kind.value for kind in EnvKind}
        for kind, seeds in table.items():
            assert len(set(seeds)) == len(seeds) == 100, kind
            assert all(isinstance(s, int) and s >= 0 for s in seeds), kind
            assert not set(seeds) & set(DEFAULT_TRAINING_SEEDS), kind

    def test_example_configs_load(self):
        """Check that the configurations and the planner script in configs/ are valid."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError
        from askgrid.mockserver import load_script

        problems = []
        for path in sorted((ROOT / "configs").glob("*.json")):
            try:
                if path.name == "mock_planner.json":
                    load_script(path)
                else:
                    load_config(path)
            except ConfigurationError as e:
                problems.append(str(e))

        if problems:
            pytest.fail("\n".join(problems))
