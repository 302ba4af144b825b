from __future__ import annotations

import json
from pathlib import Path

import pytest

from vpm.manifest import PackageManifest, parse_native_manifest
from vpm.repository import Repository

FIXTURES = Path(__file__).parent / "fixtures"

# exact pins mirroring the `npm list` output for d3 2.10.3
D3_PACKAGES = [
    ("d3", "2.10.3", {"jsdom": "0.2.14", "sizzle": "1.1.0"}),
    ("jsdom", "0.2.14", {"contextify": "0.1.3", "cssom": "0.2.5",
                         "htmlparser": "1.7.6", "request": "2.12.0"}),
    ("contextify", "0.1.3", {"bindings": "1.0.0"}),
    ("bindings", "1.0.0", {}),
    ("cssom", "0.2.5", {}),
    ("htmlparser", "1.7.6", {}),
    ("request", "2.12.0", {"form-data": "0.0.3", "mime": "1.2.7"}),
    ("form-data", "0.0.3", {"async": "0.1.9", "combined-stream": "0.0.3"}),
    ("async", "0.1.9", {}),
    ("combined-stream", "0.0.3", {"delayed-stream": "0.0.5"}),
    ("delayed-stream", "0.0.5", {}),
    ("mime", "1.2.7", {}),
    ("sizzle", "1.1.0", {}),
]

# newer releases that exact pins must ignore
D3_DISTRACTORS = [
    ("d3", "2.9.0", {}),
    ("jsdom", "0.3.0", {}),
    ("request", "2.13.0", {}),
    ("async", "0.2.0", {}),
    ("mime", "1.2.9", {}),
]


def make_manifest(name: str, version: str, deps: dict | None = None,
                  optional: dict | None = None) -> PackageManifest:
    return parse_native_manifest(json.dumps({
        "name": name, "version": version,
        "dependencies": deps or {}, "optionalDependencies": optional or {},
    }))


def payload_for(name: str, version: str) -> bytes:
    return f"{name}-{version}\n".encode()


def publish_all(repo: Repository, packages) -> Repository:
    with repo.transaction():
        for name, version, deps in packages:
            repo.publish(make_manifest(name, version, deps), payload_for(name, version))
    return repo


@pytest.fixture
def golden_d3() -> str:
    return (FIXTURES / "d3_tree.txt").read_text(encoding="utf-8")


@pytest.fixture
def d3_repo(tmp_path) -> Repository:
    repo = publish_all(Repository(tmp_path / "repo"), D3_PACKAGES)
    repo.freeze("testing-1")
    repo.promote("testing-1", "stable-1")
    publish_all(repo, D3_DISTRACTORS)
    return repo


@pytest.fixture
def mem_repo() -> Repository:
    return Repository()


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
