import io
import random
import tarfile
import warnings

import pytest

from conftest import D3_PACKAGES, make_manifest, payload_for, publish_all
from vpm.errors import (
    Conflict,
    MissingPayload,
    NoInstalledMatch,
    StoreCorrupt,
    StoreModeMismatch,
    VersionConflict,
)
from vpm.repository import Repository
from vpm.resolver import resolve_flat, resolve_nested
from vpm.store import (
    FLAT,
    LEGACY,
    TOOL_VERSION,
    VERSIONED,
    LibraryStore,
    Session,
    UnstableWarning,
    pack_directory,
    split_dir_name,
    unpack,
)
from vpm.version import parse_version

V = parse_version


@pytest.fixture
def session_repo():
    return publish_all(Repository(), [
        ("ggplot2", "0.8.9", {}), ("ggplot2", "0.9.0", {}),
        ("MASS", "7.3-21", {}), ("MASS", "7.3-22", {}), ("MASS", "7.4", {}),
        ("Matrix", "0.9", {}), ("Matrix", "1.0-6", {}),
        ("C", "1.0.0", {}), ("C", "2.0.0", {}),
    ])


def install_all(store, repo, names):
    for name in names:
        for version in repo.versions(name):
            store.install(resolve_nested(repo.index(), [(name, f"=={version}")]), repo)


def test_split_dir_name():
    assert split_dir_name("MASS_7.3-22") == ("MASS", V("7.3-22"))
    assert split_dir_name("no-underscore") is None
    assert split_dir_name("a_b_c") is None


def test_unpack_tar_and_raw(tmp_path):
    src = tmp_path / "src"
    (src / "R").mkdir(parents=True)
    (src / "R" / "code.R").write_text("f <- 1\n")
    packed = pack_directory(src)
    assert packed == pack_directory(src)
    unpack(packed, tmp_path / "out")
    assert (tmp_path / "out" / "R" / "code.R").read_text() == "f <- 1\n"
    unpack(b"not a tar", tmp_path / "raw")
    assert (tmp_path / "raw" / "payload").read_bytes() == b"not a tar"


def test_unpack_refuses_escaping_members(tmp_path):
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tar:
        info = tarfile.TarInfo("../evil")
        info.size = 1
        tar.addfile(info, io.BytesIO(b"x"))
    with pytest.raises(tarfile.TarError):
        unpack(buf.getvalue(), tmp_path / "out")
    assert not (tmp_path / "evil").exists()


def test_d3_install_creates_13_directories(d3_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    trees = resolve_nested(d3_repo.index("stable-1"), [("d3", "*")])
    events = store.install(trees, d3_repo)
    dirs = sorted(p.name for p in store.root.iterdir() if not p.name.startswith("."))
    assert dirs == sorted(f"{n}_{v}" for n, v, _ in D3_PACKAGES)
    assert [e["action"] for e in events] == ["install"] * 13
    assert store.trees() == trees
    assert (store.root / ".trees" / "d3@2.10.3.json").is_file()

    again = store.install(trees, d3_repo)
    assert [e["action"] for e in again] == ["noop"]
    assert len(store.events()) == 14


def test_payload_contents_and_meta(d3_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    store.install(resolve_nested(d3_repo.index("stable-1"), [("sizzle", "*")]), d3_repo)
    assert (store.root / "sizzle_1.1.0" / "payload").read_bytes() == payload_for("sizzle", "1.1.0")
    meta = store.meta("sizzle", V("1.1.0"))
    assert meta["payload_hash"] == d3_repo.entry("sizzle", "1.1.0").payload_hash
    assert meta["unstable"] is False


def test_nested_shares_directories_but_keeps_trees(tmp_path):
    repo = publish_all(Repository(), [("A", "1", {"B": "*", "C": "*"}), ("B", "1", {"D": "<2"}),
                                      ("C", "1", {"D": ">=2"}), ("D", "1", {}), ("D", "2", {})])
    store = LibraryStore(tmp_path / "lib")
    store.install(resolve_nested(repo.index(), [("A", "*")]), repo)
    assert store.installed() == {"A": [V("1")], "B": [V("1")], "C": [V("1")], "D": [V("1"), V("2")]}


def test_legacy_overwrite_caret(tmp_path):
    repo = publish_all(Repository(), [("caret", "4.78", {}), ("caret", "5.13", {})])
    store = LibraryStore(tmp_path / "lib", LEGACY)
    store.install(resolve_flat(repo.index(), [("caret", "==4.78")]), repo)
    events = store.install(resolve_flat(repo.index(), [("caret", "*")]), repo)
    assert events == [{"seq": 2, "action": "overwrite", "name": "caret",
                       "version": "5.13", "previous": "4.78"}]
    assert (store.root / "caret" / "payload").read_bytes() == payload_for("caret", "5.13")
    assert store.installed() == {"caret": [V("5.13")]}
    with pytest.raises(NoInstalledMatch):
        store.meta("caret", V("4.78"))


def test_store_mode_is_sticky(tmp_path):
    LibraryStore(tmp_path / "lib", LEGACY)
    assert LibraryStore(tmp_path / "lib").mode == LEGACY
    with pytest.raises(StoreModeMismatch):
        LibraryStore(tmp_path / "lib", VERSIONED)


def test_missing_payload_leaves_store_untouched(tmp_path):
    repo = publish_all(Repository(), [("a", "1", {"b": "*"}), ("b", "1", {})])
    del repo.payloads[("b", V("1"))]
    store = LibraryStore(tmp_path / "lib")
    with pytest.raises(MissingPayload) as info:
        store.install(resolve_nested(repo.index(), [("a", "*")]), repo)
    assert (info.value.name, info.value.version) == ("b", V("1"))
    assert store.installed() == {} and store.events() == []


def test_tampered_directory_detected(d3_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    trees = resolve_nested(d3_repo.index("stable-1"), [("mime", "*")])
    store.install(trees, d3_repo)
    (store.root / "mime_1.2.7" / "payload").write_bytes(b"changed")
    with pytest.raises(StoreCorrupt):
        store.install(trees, d3_repo)


def test_load_example_block(session_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    install_all(store, session_repo, ["ggplot2", "MASS", "Matrix"])
    session = Session(store)
    ids = [session.load("ggplot2", "0.8.9"), session.load("MASS", "7.3-x"), session.load("Matrix", ">=1.0")]
    assert ids == ["ggplot2@0.8.9", "MASS@7.3-22", "Matrix@1.0-6"]
    report = session.session_info()
    assert [p.namespace for p in report.packages] == ids
    assert report.to_dict()["tool_version"] == TOOL_VERSION
    assert Session.from_dict(store, session.to_dict()).session_info() == report


def test_load_defaults_to_newest(session_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    install_all(store, session_repo, ["MASS"])
    assert Session(store).load("MASS") == "MASS@7.4"


def test_versioned_session_loads_two_versions(session_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    install_all(store, session_repo, ["C"])
    session = Session(store)
    assert session.load("C", "==1.0.0") == "C@1.0.0"
    assert session.load("C", "==2.0.0") == "C@2.0.0"
    assert session.load("C", "==1.0.0") == "C@1.0.0"
    assert len(session.session_info().packages) == 2


def test_flat_session_conflict(session_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    install_all(store, session_repo, ["C"])
    session = Session(store, FLAT)
    session.load("C", "==1.0.0")
    with pytest.raises(VersionConflict) as info:
        session.load("C", "==2.0.0")
    assert (info.value.name, info.value.loaded, info.value.requested) == ("C", V("1.0.0"), "==2.0.0")
    assert session.load("C", "*") == "C@1.0.0"


def test_load_without_install(session_repo, tmp_path):
    session = Session(LibraryStore(tmp_path / "lib"))
    with pytest.raises(NoInstalledMatch):
        session.load("MASS")
    # no stable branch exists, so autoinstall draws from unstable
    with pytest.warns(UnstableWarning):
        assert session.load("MASS", "7.3-x", autoinstall=True, repo=session_repo) == "MASS@7.3-22"
    assert (tmp_path / "lib" / "MASS_7.3-22").is_dir()


def test_versioned_session_needs_versioned_store(tmp_path):
    with pytest.raises(StoreModeMismatch):
        Session(LibraryStore(tmp_path / "lib", LEGACY), VERSIONED)


def test_autoinstall_flat_conflict(tmp_path):
    repo = publish_all(Repository(), [("app", "1", {"x": "*", "y": "*"}),
                                      ("x", "1", {"lib": "==1"}), ("y", "1", {"lib": "==2"}),
                                      ("lib", "1", {}), ("lib", "2", {})])
    session = Session(LibraryStore(tmp_path / "lib", LEGACY), FLAT)
    with pytest.raises(Conflict):
        session.load("app", autoinstall=True, repo=repo)


def test_unstable_flag_warns_on_load(tmp_path):
    repo = publish_all(Repository(), [("a", "1", {})])
    store = LibraryStore(tmp_path / "lib")
    store.install(resolve_nested(repo.index(), [("a", "*")]), repo, unstable=True)
    with pytest.warns(UnstableWarning):
        Session(store).load("a")
    assert store.meta("a", V("1"))["unstable"] is True


@pytest.mark.parametrize("seed", range(5))
def test_versioned_store_is_append_only(seed, tmp_path):
    rng = random.Random(seed)
    repo = Repository()
    store = LibraryStore(tmp_path / "lib")
    seen: dict[str, str] = {}
    loadable: dict[tuple[str, str], str] = {}
    for step in range(25):
        name = rng.choice("abcd")
        version = f"{step}"
        deps = {d: "*" for d in rng.sample("abcd", 2) if d < name and repo.versions(d)}
        repo.publish(make_manifest(name, version, deps), payload_for(name, version))
        target = rng.choice(repo.names())
        store.install(resolve_nested(repo.index(), [(target, "*")]), repo)
        for child in store.root.iterdir():
            if not child.name.startswith("."):
                h = store.content_hash(*split_dir_name(child.name))
                assert seen.setdefault(child.name, h) == h
        assert set(seen) <= {c.name for c in store.root.iterdir()}
        # earlier exact loads resolve the same way after later installs
        for (n, rng_text), ns in loadable.items():
            assert Session(store).load(n, rng_text) == ns
        for n, vs in store.installed().items():
            loadable[(n, f"=={vs[0]}")] = f"{n}@{vs[0]}"


def test_legacy_events_account_for_changes(tmp_path):
    rng = random.Random(11)
    repo = publish_all(Repository(), [(n, str(v), {}) for n in "xyz" for v in range(1, 5)])
    store = LibraryStore(tmp_path / "lib", LEGACY)
    state: dict[str, str] = {}
    for _ in range(30):
        name, version = rng.choice("xyz"), str(rng.randint(1, 4))
        before = len(store.events())
        store.install(resolve_flat(repo.index(), [(name, f"=={version}")]), repo)
        new = store.events()[before:]
        if state.get(name) == version:
            assert [e["action"] for e in new] == ["noop"]
        elif name in state:
            assert new == [{"seq": before + 1, "action": "overwrite", "name": name,
                            "version": version, "previous": state[name]}]
        else:
            assert [e["action"] for e in new] == ["install"]
        state[name] = version
        assert {n: str(vs[0]) for n, vs in store.installed().items()} == state


def test_no_warning_for_stable_install(d3_repo, tmp_path):
    store = LibraryStore(tmp_path / "lib")
    store.install(resolve_nested(d3_repo.index("stable-1"), [("d3", "*")]), d3_repo)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Session(store).load("d3")


def test_empty_session(tmp_path):
    report = Session(LibraryStore(tmp_path / "lib")).session_info()
    assert report.packages == () and report.to_dict()["packages"] == []
