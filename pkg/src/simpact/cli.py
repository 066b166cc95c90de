"""Pipeline orchestration: composable stages over a shared config.

Stages write artifacts atomically into one output directory, record them
in a content-addressed manifest, and skip work already up to date. Exit
codes: 0 success, 2 config error, 3 data error, 4 infeasible constraint.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from collections import namedtuple
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import cluster_stats, medoid_posts, tfidf_top_terms
from .clustering import ClusterModel, fit_granularities
from .embedding import (
    DegenerateTextError,
    DegenerateUserError,
    EmbeddingError,
    load_vectors,
    provider_from_spec,
    save_vectors,
    user_embedding,
)
from .events import (
    EventParseError,
    keyword_filter,
    language_filter,
    load_keywords,
    prune_low_activity,
    read_events,
    serialize_event,
)
from .evalmetrics import (
    GenerationFormatError,
    evaluate,
    read_generations,
    render_comparison,
)
from .mincostflow import InfeasibleConstraintError
from .privacy import (
    SecretKey,
    SecretKeyError,
    delete_user,
    obfuscate_timestamps,
    pseudonymize_thread,
    scrub_text,
)
from .threads import (
    MalformedThreadError,
    PostIndex,
    UnclusteredActorError,
    apply_ranks,
    build_thread,
    label_thread,
    read_threads,
    serialize_thread,
)

logger = logging.getLogger(__name__)

KEY_ENV_VAR = "SIMPACT_KEY_FILE"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4

STAGES = (
    "ingest", "anonymize", "embed", "cluster",
    "threads", "stats", "keywords", "eval", "delete-user",
)


class ConfigError(Exception):
    exit_code = EXIT_CONFIG


class DataError(Exception):
    exit_code = EXIT_DATA


class InfeasibleError(Exception):
    exit_code = EXIT_INFEASIBLE


@dataclass
class PipelineConfig:
    inputs: list[str] = field(default_factory=list)
    endpoint: str | None = None
    collections: list[str] | None = None
    cursor: int | None = None
    max_events: int | None = None
    handles_file: str | None = None
    party_file: str | None = None
    general_file: str | None = None
    lang: str = "en"
    min_posts: int = 2
    provider: str = "fallback"
    dim: int = 256
    batch_size: int = 64
    ks: list[int] = field(default_factory=lambda: [2, 25, 100, 1000])
    min_size: int = 10
    thread_k: int | None = None
    max_iter: int = 100
    tol: float = 1e-4
    seed: int = 0
    key_file: str | None = None
    bins: int = 16
    top_terms: int = 5
    jaccard_n: int = 100
    medoids: int = 5
    sample_cap: int = 10_000
    global_ranks: bool = False
    f1_average: str = "micro"
    out_dir: str = "out"

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            import tomllib  # py >= 3.11
        except ImportError:
            import tomli as tomllib
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def key(self) -> SecretKey:
        path = self.key_file or os.environ.get(KEY_ENV_VAR)
        if not path:
            raise ConfigError(
                f"no secret key: pass --key-file or set ${KEY_ENV_VAR}"
            )
        try:
            return SecretKey.from_file(path)
        except (OSError, SecretKeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def out(self) -> Path:
        return Path(self.out_dir)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _update_manifest(
    out: Path, stage: str, artifacts: list[Path], cfg: "PipelineConfig",
    extra: dict | None = None, removed: list[Path] | None = None,
) -> None:
    manifest_path = out / "manifest.json"
    manifest: dict = {"toolkit_version": __version__, "artifacts": {}}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest.setdefault("artifacts", {})
    for artifact in artifacts:
        rel = str(artifact.relative_to(out))
        manifest["artifacts"][rel] = {"sha256": _sha256(artifact), "stage": stage}
    for artifact in removed or []:
        manifest["artifacts"].pop(str(artifact.relative_to(out)), None)
    manifest["seed"] = cfg.seed
    if extra:
        manifest.update(extra)
    manifest["toolkit_version"] = __version__
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@contextlib.contextmanager
def stage_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(
            f"{lock} exists: another stage is running in {out} (or remove a stale lock)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


def _fresh(outputs: list[Path], inputs: list[Path]) -> bool:
    if not outputs or not all(p.exists() for p in outputs):
        return False
    if not inputs or not all(p.exists() for p in inputs):
        return False
    newest_input = max(p.stat().st_mtime_ns for p in inputs)
    oldest_output = min(p.stat().st_mtime_ns for p in outputs)
    return oldest_output >= newest_input


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DataError(f"{path} is missing; run `{producer}` first")
    return path


# ---------------------------------------------------------------- stages

def stage_ingest(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    target = out / "events.jsonl"
    inputs = [Path(p) for p in cfg.inputs]
    if not inputs and not cfg.endpoint:
        raise ConfigError("ingest needs input files or a firehose endpoint")
    for path in inputs:
        if not path.exists():
            raise ConfigError(f"input file {path} does not exist")
    if inputs and not force and _fresh([target], inputs):
        logger.info("ingest: up to date")
        return [target]

    kw = load_keywords(cfg.handles_file, cfg.party_file, cfg.general_file)
    events = []
    try:
        if inputs:
            for path in inputs:
                events.extend(read_events(path))
        else:
            from .jetstream import subscribe

            for event in subscribe(cfg.endpoint, cfg.collections, cfg.cursor):
                events.append(event)
                if cfg.max_events and len(events) >= cfg.max_events:
                    break
    except EventParseError as exc:
        raise DataError(str(exc)) from exc

    kept = []
    for event in events:
        if event.text is not None:
            if not language_filter(event, cfg.lang):
                continue
            if not keyword_filter(event, kw):
                continue
        kept.append(event)
    kept = prune_low_activity(kept, cfg.min_posts)

    buf = io.StringIO()
    for event in kept:
        buf.write(serialize_event(event) + "\n")
    atomic_write_text(target, buf.getvalue())
    _update_manifest(out, "ingest", [target], cfg)
    logger.info("ingest: kept %d of %d events", len(kept), len(events))
    return [target]


def stage_anonymize(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    source = _require(out / "events.jsonl", "ingest")
    target = out / "events_clean.jsonl"
    if not force and _fresh([target], [source]):
        logger.info("anonymize: up to date")
        return [target]
    buf = io.StringIO()
    redaction_count = 0
    for event in read_events(source):
        if event.text is not None:
            clean, redactions = scrub_text(event.text)
            redaction_count += len(redactions)
            event = replace(event, text=clean)
        buf.write(serialize_event(event) + "\n")
    atomic_write_text(target, buf.getvalue())
    _update_manifest(out, "anonymize", [target], cfg)
    logger.info("anonymize: %d entities redacted", redaction_count)
    return [target]


def stage_embed(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    source = _require(out / "events_clean.jsonl", "anonymize")
    post_target = out / "post_vectors.bin"
    user_target = out / "user_vectors.bin"
    if not force and _fresh([post_target, user_target], [source]):
        logger.info("embed: up to date")
        return [post_target, user_target]

    events = [e for e in read_events(source) if e.text]
    provider = provider_from_spec(cfg.provider, dim=cfg.dim, seed=cfg.seed)
    try:
        post_vectors: dict[str, np.ndarray] = {}
        by_user: dict[str, list[str]] = {}
        for event in events:
            by_user.setdefault(event.did, []).append(event.uri)
            if event.uri in post_vectors:
                continue
            try:
                post_vectors[event.uri] = provider.embed([event.text])[0]
            except DegenerateTextError:
                logger.warning("post %s has no embeddable text; skipped", event.uri)
        user_vectors: dict[str, np.ndarray] = {}
        for did in sorted(by_user):
            vecs = [post_vectors[u] for u in by_user[did] if u in post_vectors]
            if not vecs:
                continue
            try:
                user_vectors[did] = user_embedding(vecs)
            except DegenerateUserError:
                logger.warning("user %s has a degenerate mean embedding; excluded", did)
        dim = provider.dim
    finally:
        provider.close()
    if not user_vectors:
        raise DataError("no users could be embedded; is the input empty?")

    for target, vectors in ((post_target, post_vectors), (user_target, user_vectors)):
        fd, tmp = tempfile.mkstemp(dir=out, prefix=target.name + ".")
        os.close(fd)
        save_vectors(tmp, vectors, dim)
        os.replace(tmp, target)
    _update_manifest(out, "embed", [post_target, user_target], cfg)
    logger.info("embed: %d posts, %d users at dim %d", len(post_vectors), len(user_vectors), dim)
    return [post_target, user_target]


def stage_cluster(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    source = _require(out / "user_vectors.bin", "embed")
    targets = [out / f"cluster_k{k}.json" for k in cfg.ks]
    targets += [out / f"assignment_k{k}.csv" for k in cfg.ks]
    suite_target = out / "granularity.json"
    vectors, _dim = load_vectors(source)
    ids = sorted(vectors)
    points = np.stack([vectors[i] for i in ids])
    feasible = []
    for k in sorted(set(cfg.ks)):
        if k * cfg.min_size <= len(ids) and k <= len(ids):
            feasible.append(k)
        else:
            logger.warning(
                "skipping K=%d: %d users cannot satisfy min_size %d",
                k, len(ids), cfg.min_size,
            )
    if not feasible:
        raise InfeasibleError(
            f"no feasible K in {cfg.ks}: {len(ids)} users with min_size {cfg.min_size}"
        )
    expected = [out / f"cluster_k{k}.json" for k in feasible]
    expected += [out / f"assignment_k{k}.csv" for k in feasible]
    if not force and _fresh(expected + [suite_target], [source]):
        logger.info("cluster: up to date")
        return expected + [suite_target]

    suite = fit_granularities(
        points, feasible, min_size=cfg.min_size, seed=cfg.seed,
        sample_cap=cfg.sample_cap, max_iter=cfg.max_iter, tol=cfg.tol,
    )
    written = []
    for k, model in suite.models.items():
        model.ids = list(ids)
        model_path = out / f"cluster_k{k}.json"
        atomic_write_text(model_path, model.to_json() + "\n")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user", "cluster"])
        for uid, label in zip(ids, model.labels):
            writer.writerow([uid, int(label)])
        csv_path = out / f"assignment_k{k}.csv"
        atomic_write_text(csv_path, buf.getvalue())
        written += [model_path, csv_path]
    atomic_write_text(
        suite_target,
        json.dumps(
            {
                "silhouettes": {str(k): v for k, v in suite.silhouettes.items()},
                "best_k": suite.best_k,
                "min_size": cfg.min_size,
                "seed": cfg.seed,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    written.append(suite_target)
    _update_manifest(out, "cluster", written, cfg)
    logger.info(
        "cluster: fit K=%s; best by silhouette: %s",
        sorted(suite.models), suite.best_k,
    )
    return written


def _resolve_thread_k(cfg: PipelineConfig, out: Path) -> int:
    if cfg.thread_k is not None:
        return cfg.thread_k
    suite_path = _require(out / "granularity.json", "cluster")
    suite = json.loads(suite_path.read_text(encoding="utf-8"))
    best = suite.get("best_k")
    if best is None:
        raise DataError("granularity.json has no best_k; pass --k explicitly")
    return int(best)


def _load_assignment(out: Path, k: int) -> dict[str, int]:
    path = _require(out / f"assignment_k{k}.csv", "cluster")
    assignment: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            assignment[row["user"]] = int(row["cluster"])
    if not assignment:
        raise DataError(f"{path} is empty")
    return assignment


_RankItem = namedtuple("_RankItem", ["uri", "created_at"])


def stage_threads(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    source = _require(out / "events_clean.jsonl", "anonymize")
    key = cfg.key()
    k = _resolve_thread_k(cfg, out)
    assignment = _load_assignment(out, k)

    dataset_path = out / "dataset.json"
    wanted_ranks = "global" if cfg.global_ranks else "per-cluster"
    if not force and dataset_path.exists():
        previous = json.loads(dataset_path.read_text(encoding="utf-8"))
        shards = sorted((out / "threads").glob("cluster_*.jsonl"))
        if (
            previous.get("k") == k
            and previous.get("ranks") == wanted_ranks
            and previous.get("key_fingerprint") == key.fingerprint
            and _fresh(shards + [dataset_path], [source, out / f"assignment_k{k}.csv"])
        ):
            logger.info("threads: up to date")
            return shards + [dataset_path]

    events = list(read_events(source))
    index = PostIndex.build(events)
    by_cluster: dict[int, list] = {}
    dropped = 0
    for event in events:
        try:
            thread = build_thread(event, index)
        except MalformedThreadError as exc:
            logger.warning("skipping malformed thread at %s: %s", event.uri, exc)
            dropped += 1
            continue
        if thread is None:
            dropped += 1
            continue
        try:
            thread.cluster = label_thread(thread, assignment)
        except UnclusteredActorError:
            dropped += 1
            continue
        by_cluster.setdefault(thread.cluster, []).append(thread)

    if not by_cluster:
        raise DataError("no threads could be assembled; check upstream stages")

    def rank_items(threads) -> list[_RankItem]:
        seen: dict[str, int] = {}
        for thread in threads:
            for el in thread.elements:
                seen[el.uri] = el.created_at
        return [_RankItem(uri, t) for uri, t in seen.items()]

    if cfg.global_ranks:
        rank_map = obfuscate_timestamps(
            rank_items(t for ts in by_cluster.values() for t in ts)
        )
        rank_maps = {c: rank_map for c in by_cluster}
    else:
        rank_maps = {c: obfuscate_timestamps(rank_items(ts)) for c, ts in by_cluster.items()}

    shard_dir = out / "threads"
    shard_dir.mkdir(parents=True, exist_ok=True)
    wanted = {shard_dir / f"cluster_{c}.jsonl" for c in by_cluster}
    stale = [p for p in shard_dir.glob("cluster_*.jsonl") if p not in wanted]
    for orphan in stale:
        orphan.unlink()
    written = []
    counts = {}
    total_elements = 0
    for cluster in sorted(by_cluster):
        lines = []
        for thread in by_cluster[cluster]:
            ranked = apply_ranks(thread, rank_maps[cluster])
            exported = pseudonymize_thread(key, ranked)
            total_elements += len(exported.elements)
            lines.append(serialize_thread(exported))
        lines.sort()
        shard = shard_dir / f"cluster_{cluster}.jsonl"
        atomic_write_text(shard, "\n".join(lines) + "\n")
        written.append(shard)
        counts[str(cluster)] = len(lines)

    dataset = {
        "k": k,
        "clusters": counts,
        "threads": sum(counts.values()),
        "elements": total_elements,
        "dropped_events": dropped,
        "key_fingerprint": key.fingerprint,
        "seed": cfg.seed,
        "ranks": wanted_ranks,
        "toolkit_version": __version__,
    }
    atomic_write_text(dataset_path, json.dumps(dataset, indent=2, sort_keys=True) + "\n")
    written.append(dataset_path)
    _update_manifest(out, "threads", written, cfg,
                     {"key_fingerprint": key.fingerprint}, removed=stale)
    logger.info("threads: %d threads across %d clusters", dataset["threads"], len(counts))
    return written


def stage_stats(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    source = _require(out / "events_clean.jsonl", "anonymize")
    k = _resolve_thread_k(cfg, out)
    assignment = _load_assignment(out, k)
    targets = [out / "stats.csv", out / "stats.txt", out / "stats.json"]
    if not force and _fresh(targets, [source, out / f"assignment_k{k}.csv"]):
        logger.info("stats: up to date")
        return targets
    stats = cluster_stats(read_events(source), assignment)
    atomic_write_text(targets[0], stats.to_csv())
    atomic_write_text(targets[1], stats.to_text())
    atomic_write_text(targets[2], stats.to_json() + "\n")
    _update_manifest(out, "stats", targets, cfg)
    return targets


def stage_keywords(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    out = cfg.out()
    source = _require(out / "events_clean.jsonl", "anonymize")
    vectors_path = _require(out / "post_vectors.bin", "embed")
    k = _resolve_thread_k(cfg, out)
    assignment = _load_assignment(out, k)
    model_path = _require(out / f"cluster_k{k}.json", "cluster")
    targets = [out / "keywords.json", out / "medoids.json"]
    if not force and _fresh(targets, [source, vectors_path, model_path]):
        logger.info("keywords: up to date")
        return targets

    model = ClusterModel.from_json(model_path.read_text(encoding="utf-8"))
    post_vectors, _dim = load_vectors(vectors_path)
    corpora: dict[int, list[str]] = {c: [] for c in sorted(set(assignment.values()))}
    cluster_posts: dict[int, list] = {c: [] for c in corpora}
    texts: dict[str, str] = {}
    for event in read_events(source):
        if not event.text:
            continue
        cluster = assignment.get(event.did)
        if cluster is None:
            continue
        corpora[cluster].append(event.text)
        texts[event.uri] = event.text
        if event.uri in post_vectors:
            cluster_posts[cluster].append((event.uri, post_vectors[event.uri]))

    keywords = tfidf_top_terms(corpora, cfg.top_terms)
    medoids = {}
    for cluster, posts in cluster_posts.items():
        if not posts or cluster >= len(model.centroids):
            medoids[cluster] = []
            continue
        uris = medoid_posts(posts, model.centroids[cluster], cfg.medoids)
        medoids[cluster] = [texts[u] for u in uris]

    atomic_write_text(
        targets[0],
        json.dumps({str(c): terms for c, terms in keywords.items()}, indent=2, sort_keys=True) + "\n",
    )
    atomic_write_text(
        targets[1],
        json.dumps({str(c): m for c, m in medoids.items()}, indent=2, sort_keys=True) + "\n",
    )
    _update_manifest(out, "keywords", targets, cfg)
    return targets


def _load_dataset_threads(out: Path) -> list:
    shard_dir = out / "threads"
    _require(out / "dataset.json", "threads")
    threads = []
    for shard in sorted(shard_dir.glob("cluster_*.jsonl")):
        threads.extend(read_threads(shard))
    if not threads:
        raise DataError(f"no thread shards under {shard_dir}; run `threads` first")
    return threads


def stage_eval(
    cfg: PipelineConfig, generations: list[str],
    dataset_dir: str | None = None, force: bool = False,
) -> list[Path]:
    out = cfg.out()
    if not generations:
        raise ConfigError("eval needs at least one --generations file")
    gen_paths = [Path(g) for g in generations]
    for path in gen_paths:
        if not path.exists():
            raise ConfigError(f"generations file {path} does not exist")
    data_root = Path(dataset_dir) if dataset_dir else out
    targets = [out / "metrics.json", out / "metrics.txt"]
    shards = sorted((data_root / "threads").glob("cluster_*.jsonl"))
    if not force and _fresh(targets, gen_paths + shards):
        logger.info("eval: up to date")
        return targets
    threads = _load_dataset_threads(data_root)

    provider = provider_from_spec(cfg.provider, dim=cfg.dim, seed=cfg.seed)
    try:
        reports = {}
        for path in gen_paths:
            try:
                records = read_generations(path)
            except GenerationFormatError as exc:
                raise DataError(str(exc)) from exc
            try:
                reports[path.stem] = evaluate(
                    records, threads, provider,
                    bins=cfg.bins, jaccard_n=cfg.jaccard_n,
                    seed=cfg.seed, f1_average=cfg.f1_average,
                )
            except (ValueError, EmbeddingError) as exc:
                raise DataError(f"{path}: {exc}") from exc
    finally:
        provider.close()

    payload = {name: json.loads(report.to_json()) for name, report in reports.items()}
    atomic_write_text(targets[0], json.dumps(payload, indent=2, sort_keys=True) + "\n")
    atomic_write_text(targets[1], render_comparison(reports))
    _update_manifest(out, "eval", targets, cfg)
    return targets


def stage_delete_user(cfg: PipelineConfig, did: str) -> int:
    out = cfg.out()
    key = cfg.key()
    dataset_path = _require(out / "dataset.json", "threads")
    dataset = json.loads(dataset_path.read_text(encoding="utf-8"))
    threads = _load_dataset_threads(out)
    try:
        kept, removed = delete_user(
            key, did, threads, expected_fingerprint=dataset.get("key_fingerprint")
        )
    except SecretKeyError as exc:
        raise ConfigError(str(exc)) from exc

    by_cluster: dict[int, list[str]] = {}
    total_elements = 0
    for thread in kept:
        by_cluster.setdefault(thread.cluster, []).append(serialize_thread(thread))
        total_elements += len(thread.elements)
    shard_dir = out / "threads"
    written = []
    emptied = []
    for shard in sorted(shard_dir.glob("cluster_*.jsonl")):
        cluster = int(shard.stem.split("_", 1)[1])
        lines = sorted(by_cluster.get(cluster, []))
        if lines:
            atomic_write_text(shard, "\n".join(lines) + "\n")
            written.append(shard)
        else:
            shard.unlink()
            emptied.append(shard)
    dataset["clusters"] = {str(c): len(v) for c, v in sorted(by_cluster.items())}
    dataset["threads"] = len(kept)
    dataset["elements"] = total_elements
    atomic_write_text(dataset_path, json.dumps(dataset, indent=2, sort_keys=True) + "\n")
    _update_manifest(out, "delete-user", written + [dataset_path], cfg,
                     removed=emptied)
    logger.info("delete-user: removed %d elements for %s", removed, did)
    return removed


def run_stage(name: str, cfg: PipelineConfig, force: bool = False, **kwargs) -> list[Path]:
    """Run one named stage under the output-directory lock."""
    if name not in STAGES:
        raise ConfigError(f"unknown stage {name!r}; choose from {', '.join(STAGES)}")
    with stage_lock(cfg.out()):
        if name == "ingest":
            return stage_ingest(cfg, force)
        if name == "anonymize":
            return stage_anonymize(cfg, force)
        if name == "embed":
            return stage_embed(cfg, force)
        if name == "cluster":
            return stage_cluster(cfg, force)
        if name == "threads":
            return stage_threads(cfg, force)
        if name == "stats":
            return stage_stats(cfg, force)
        if name == "keywords":
            return stage_keywords(cfg, force)
        if name == "eval":
            return stage_eval(cfg, kwargs.get("generations", []),
                              dataset_dir=kwargs.get("dataset"), force=force)
        if name == "delete-user":
            removed = stage_delete_user(cfg, kwargs["did"])
            print(removed)
            return []
    raise AssertionError("unreachable")


# ---------------------------------------------------------------- CLI

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="pipeline RNG seed")
    parser.add_argument("--force", action="store_true", help="rerun even if up to date")
    parser.add_argument("--key-file", help=f"secret key path (or ${KEY_ENV_VAR})")
    parser.add_argument("-v", "--verbose", action="store_true")


def _parse_ks(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simpact",
        description="Privacy-preserving social-media dataset pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"simpact {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True)

    p = sub.add_parser("ingest", help="parse, filter, and curate raw events")
    _add_common(p)
    p.add_argument("--input", action="append", default=None, help="events JSONL (repeatable)")
    p.add_argument("--endpoint", help="Jetstream websocket endpoint for live capture")
    p.add_argument("--cursor", type=int)
    p.add_argument("--max-events", type=int)
    p.add_argument("--handles-file")
    p.add_argument("--party-file")
    p.add_argument("--general-file")
    p.add_argument("--lang")
    p.add_argument("--min-posts", type=int)

    p = sub.add_parser("anonymize", help="redact PII and mentions from event text")
    _add_common(p)

    p = sub.add_parser("embed", help="embed posts and users")
    _add_common(p)
    p.add_argument("--provider", help="fallback | cmd:<argv> | tcp:host:port")
    p.add_argument("--dim", type=int)
    p.add_argument("--batch", type=int, dest="batch_size")

    p = sub.add_parser("cluster", help="fit size-constrained K-means at each granularity")
    _add_common(p)
    p.add_argument("--k", type=_parse_ks, dest="ks", help="comma-separated K values")
    p.add_argument("--min-size", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--sample-cap", type=int)

    p = sub.add_parser("threads", help="assemble, rank, and pseudonymize threads")
    _add_common(p)
    p.add_argument("--k", type=int, dest="thread_k", help="granularity to export")
    p.add_argument("--global-ranks", action="store_true")

    p = sub.add_parser("stats", help="action-by-cluster statistics tables")
    _add_common(p)
    p.add_argument("--k", type=int, dest="thread_k")

    p = sub.add_parser("keywords", help="per-cluster TF-IDF keywords and medoid posts")
    _add_common(p)
    p.add_argument("--k", type=int, dest="thread_k")
    p.add_argument("--top-terms", type=int)
    p.add_argument("--medoids", type=int)

    p = sub.add_parser("eval", help="score generated records against the dataset")
    _add_common(p)
    p.add_argument("--generations", action="append", required=True)
    p.add_argument("--dataset", help="dataset directory (default: the output directory)")
    p.add_argument("--provider")
    p.add_argument("--dim", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--jaccard-n", type=int)
    p.add_argument("--f1-average", choices=["micro", "macro"])

    p = sub.add_parser("delete-user", help="remove a DID's content from the dataset")
    _add_common(p)
    p.add_argument("--did", required=True)

    return parser


_OVERRIDES = (
    "endpoint", "cursor", "max_events", "handles_file", "party_file",
    "general_file", "lang", "min_posts", "provider", "dim", "batch_size",
    "ks", "min_size", "thread_k", "max_iter", "tol", "sample_cap",
    "top_terms", "medoids", "bins", "jaccard_n", "f1_average", "seed",
    "key_file",
)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if getattr(args, "input", None):
        cfg.inputs = list(args.input)
    for name in _OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "global_ranks", False):
        cfg.global_ranks = True
    if args.out:
        cfg.out_dir = args.out
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        kwargs = {}
        if args.stage == "eval":
            kwargs["generations"] = args.generations
            kwargs["dataset"] = args.dataset
        if args.stage == "delete-user":
            kwargs["did"] = args.did
        artifacts = run_stage(args.stage, cfg, force=getattr(args, "force", False), **kwargs)
        for artifact in artifacts:
            print(artifact)
    except (ConfigError, DataError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except EventParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleConstraintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
