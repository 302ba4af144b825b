"""Command line interface.

Exit status: 0 on success, 1 for domain errors (printed to stderr as
``error: <TYPE>: <detail>``), 2 for usage errors. Machine-readable output goes
to stdout; warnings go to stderr.

Repository and library locations default to ``./repo`` and ``./lib`` and can
be set with ``VPM_REPO`` / ``VPM_LIB`` or ``--repo`` / ``--lib``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .errors import Conflict, MissingField, VpmError
from .lockfile import LOCK_FILENAME, lock_store, restore
from .manifest import DCF_FILENAME, NATIVE_FILENAME, parse_manifest
from .ranges import parse_range
from .repository import UNSTABLE, Repository
from .resolver import ConflictReport, render_tree, resolve_flat, resolve_nested
from .store import FLAT, LEGACY, VERSIONED, LibraryStore, Session, pack_directory

UNSTABLE_WARNING = "installing from unstable branch"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _split_spec(spec: str):
    name, sep, rng = spec.partition("@")
    return name, parse_range(rng) if sep else parse_range("*")


def _repo(args) -> Repository:
    return Repository(args.repo or os.environ.get("VPM_REPO") or "repo")


def _lib(args) -> Path:
    return Path(args.lib or os.environ.get("VPM_LIB") or "lib")


def _user_branch(args, repo: Repository) -> str:
    """Branch for end-user commands: --branch, --devel, else newest stable."""
    if getattr(args, "devel", False):
        if args.branch:
            raise UsageError("--devel and --branch are mutually exclusive")
        warnings.warn(UNSTABLE_WARNING + "; these versions are not tested")
        return UNSTABLE
    if args.branch:
        return args.branch
    branch = repo.default_branch()
    if branch == UNSTABLE:
        warnings.warn(f"no stable branch has been released; {UNSTABLE_WARNING}")
    return branch


def _read_manifest(path: Path):
    if path.is_dir():
        for filename in (NATIVE_FILENAME, DCF_FILENAME):
            if (path / filename).is_file():
                path = path / filename
                break
        else:
            raise MissingField(f"{path} contains neither {NATIVE_FILENAME} nor {DCF_FILENAME}")
    text = path.read_text(encoding="utf-8")
    return parse_manifest(text), text


# -- commands ---------------------------------------------------------------

def cmd_publish(args, out):
    repo = _repo(args)
    directory = Path(args.dir)
    manifest, text = _read_manifest(directory)
    entry = repo.publish(manifest, pack_directory(directory), manifest_text=text)
    print(f"published {entry.name} {entry.version} {entry.payload_hash}", file=out)


def cmd_freeze(args, out):
    branch = _repo(args).freeze(args.id)
    print(f"frozen {branch.id}: {len(branch.pins())} packages", file=out)


def cmd_promote(args, out):
    branch = _repo(args).promote(args.testing_id, args.stable_id)
    print(f"promoted {args.testing_id} -> {branch.id}", file=out)


def cmd_backport(args, out):
    branch = _repo(args).backport(args.stable_id, args.name, args.version, args.reason)
    print(f"backported {args.name} {args.version} into {branch.id} (revision {branch.revision})", file=out)


def cmd_install(args, out):
    repo = _repo(args)
    name, rng = _split_spec(args.spec)
    branch = _user_branch(args, repo)
    index = repo.index(branch)
    unstable = branch == UNSTABLE
    if args.mode == "nested":
        store = LibraryStore(_lib(args), VERSIONED)
        resolution = resolve_nested(index, [(name, rng)], args.with_optional)
    else:
        store = LibraryStore(_lib(args), LEGACY if args.mode == "legacy" else VERSIONED)
        resolution = resolve_flat(index, [(name, rng)], args.with_optional)
        if isinstance(resolution, ConflictReport):
            raise Conflict(resolution)
    for event in store.install(resolution, repo, unstable=unstable):
        detail = " ".join(str(event[k]) for k in ("name", "version") if k in event)
        if "previous" in event:
            detail += f" (was {event['previous']})"
        print(f"{event['action']} {detail}".rstrip(), file=out)


def cmd_tree(args, out):
    repo = _repo(args)
    name, rng = _split_spec(args.spec)
    branch = _user_branch(args, repo)
    trees = resolve_nested(repo.index(branch), [(name, rng)], args.with_optional)
    out.write(render_tree(trees))


def cmd_revdep(args, out):
    for dependent, kind in _repo(args).revdep(args.branch or UNSTABLE, args.name).items():
        print(f"{dependent}\t{kind}", file=out)


def cmd_impact(args, out):
    candidate, _ = _read_manifest(Path(args.manifest))
    report = _repo(args).update_impact(args.branch or UNSTABLE, candidate)
    for e in report.entries:
        print(f"{e.dependent}\t{e.version}\t{e.kind}\t{e.status}\t{e.range}", file=out)
    print(f"# {report.package} {report.previous} -> {report.candidate}: "
          f"{len(report.broken)} broken, {len(report.newly_selected)} newly-selected, "
          f"{len(report.unaffected)} unaffected", file=out)


def _session(args, store):
    path = Path(args.session) if args.session else None
    if path is not None and path.exists():
        return Session.from_dict(store, json.loads(path.read_text(encoding="utf-8"))), path
    return Session(store, VERSIONED if store.mode == VERSIONED else FLAT), path


def cmd_load(args, out):
    store = LibraryStore(_lib(args))
    session, path = _session(args, store)
    repo = _repo(args) if args.autoinstall else None
    ns = session.load(args.name, args.version, autoinstall=args.autoinstall,
                      repo=repo, branch=args.branch)
    if path is not None:
        path.write_text(json.dumps(session.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(ns, file=out)


def cmd_session_info(args, out):
    store = LibraryStore(_lib(args))
    session, _ = _session(args, store)
    out.write(json.dumps(session.session_info().to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_lock(args, out):
    store = LibraryStore(_lib(args))
    repo_path = args.repo or os.environ.get("VPM_REPO") or "repo"
    repo = Repository(repo_path) if Path(repo_path).exists() else None
    session = _session(args, store)[0] if args.session else None
    text = lock_store(store, repo, branch=args.branch, platform=args.platform, session=session)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        out.write(text)


def cmd_restore(args, out):
    text = Path(args.lockfile).read_text(encoding="utf-8")
    store = restore(text, _repo(args), _lib(args))
    count = sum(len(v) for v in store.installed().values())
    print(f"restored {count} packages into {store.root}", file=out)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--repo", help="repository root (default: $VPM_REPO or ./repo)")
    common.add_argument("--lib", help="library root (default: $VPM_LIB or ./lib)")

    parser = _Parser(prog="vpm", description="Versioned package manager.")
    parser.add_argument("--version", action="version", version=f"vpm {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("publish", parents=[common], help="publish a package directory to unstable")
    p.add_argument("dir")
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("freeze", parents=[common], help="fork unstable into a testing branch")
    p.add_argument("id")
    p.set_defaults(func=cmd_freeze)

    p = sub.add_parser("promote", parents=[common], help="release a testing branch as stable")
    p.add_argument("testing_id")
    p.add_argument("stable_id")
    p.set_defaults(func=cmd_promote)

    p = sub.add_parser("backport", parents=[common], help="change one pin of a frozen branch")
    p.add_argument("stable_id")
    p.add_argument("name")
    p.add_argument("version")
    p.add_argument("--reason", default="")
    p.set_defaults(func=cmd_backport)

    for command, func, helptext in (("install", cmd_install, "resolve and install a package"),
                                    ("tree", cmd_tree, "print the nested dependency tree")):
        p = sub.add_parser(command, parents=[common], help=helptext)
        p.add_argument("spec", metavar="name[@range]")
        p.add_argument("--branch")
        p.add_argument("--devel", action="store_true", help="resolve against the unstable branch")
        p.add_argument("--with-optional", action="store_true")
        if command == "install":
            p.add_argument("--mode", choices=("nested", "flat", "legacy"), default="nested")
        p.set_defaults(func=func)

    p = sub.add_parser("revdep", parents=[common], help="list reverse dependencies")
    p.add_argument("name")
    p.add_argument("--branch")
    p.set_defaults(func=cmd_revdep)

    p = sub.add_parser("impact", parents=[common], help="report the impact of a candidate update")
    p.add_argument("manifest", help="DESCRIPTION, package.meta.json, or a directory holding one")
    p.add_argument("--branch")
    p.set_defaults(func=cmd_impact)

    p = sub.add_parser("load", parents=[common], help="load a package into a session")
    p.add_argument("name")
    p.add_argument("--version", default="*", dest="version")
    p.add_argument("--session")
    p.add_argument("--autoinstall", action="store_true")
    p.add_argument("--branch")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("session-info", parents=[common], help="describe a saved session")
    p.add_argument("--session")
    p.set_defaults(func=cmd_session_info)

    p = sub.add_parser("lock", parents=[common], help=f"write a lockfile ({LOCK_FILENAME})")
    p.add_argument("--out")
    p.add_argument("--session")
    p.add_argument("--branch")
    p.add_argument("--platform")
    p.set_defaults(func=cmd_lock)

    p = sub.add_parser("restore", parents=[common], help="rebuild the library from a lockfile")
    p.add_argument("lockfile")
    p.set_defaults(func=cmd_restore)
    return parser


def main(argv: list[str] | None = None) -> int:
    out, err = sys.stdout, sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(err)
        print(f"error: {exc}", file=err)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            args.func(args, out)
            status = 0
        except UsageError as exc:
            print(f"error: {exc}", file=err)
            status = 2
        except VpmError as exc:
            print(f"error: {exc.kind}: {exc}", file=err)
            status = 1
        except OSError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=err)
            status = 1
    for w in caught:
        print(f"warning: {w.message}", file=err)
    return status


if __name__ == "__main__":
    sys.exit(main())
