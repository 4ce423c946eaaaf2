"""Dataset directory reader/writer.

Layout::

    vocab.txt                 one token per line; line n (0-based) is token id n
    ads.txt                   ad <TAB> ad_id <TAB> title words <TAB> description words
    impressions.txt           imp <TAB> user_id <TAB> ad_id <TAB> label <TAB> timestamp
    behaviors_platform_<i>.txt
                              beh <TAB> platform <TAB> user_id <TAB> timestamp <TAB> words
    meta.txt                  key=value lines (counts, seed, generator spec echo)

Words are separated by single spaces; an empty field means an empty text.
Timestamps are integer seconds.
"""

from __future__ import annotations

import re
from pathlib import Path

from .records import AdRecord, BehaviorRecord, Dataset, Impressions
from .vocab import Vocab


class DatasetError(ValueError):
    pass


def _words(vocab: Vocab, ids) -> str:
    return " ".join(vocab.itos[i] for i in ids)


def _ids(vocab: Vocab, field: str) -> tuple[int, ...]:
    return vocab.encode(field.split(" ")) if field else ()


def save_dataset(ds: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    v = ds.vocab
    v.save(d / "vocab.txt")
    with open(d / "ads.txt", "w", encoding="utf-8", newline="\n") as fh:
        for a in ds.ads:
            fh.write(f"ad\t{a.ad_id}\t{_words(v, a.title)}\t{_words(v, a.description)}\n")
    imp = ds.impressions
    with open(d / "impressions.txt", "w", encoding="utf-8", newline="\n") as fh:
        for u, a, y, t in zip(imp.user_ids, imp.ad_ids, imp.labels, imp.timestamps):
            fh.write(f"imp\t{u}\t{a}\t{y}\t{t}\n")
    for p, recs in sorted(ds.behaviors.items()):
        with open(d / f"behaviors_platform_{p}.txt", "w", encoding="utf-8", newline="\n") as fh:
            for r in recs:
                fh.write(f"beh\t{r.platform}\t{r.user_id}\t{r.timestamp}\t{_words(v, r.tokens)}\n")
    meta = dict(ds.meta)
    meta.setdefault("format_version", "1")
    meta["platforms"] = ",".join(map(str, ds.platform_ids))
    meta["users"] = str(ds.n_users)
    (d / "meta.txt").write_text("".join(f"{k}={val}\n" for k, val in meta.items()), encoding="utf-8")
    return d


def _read_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\n")


def _fields(path: Path, lineno: int, line: str, kind: str, n: int) -> list[str]:
    parts = line.split("\t")
    if len(parts) != n or parts[0] != kind:
        raise DatasetError(f"{path.name}:{lineno}: expected {n} tab-separated fields starting with {kind!r}")
    return parts


def _int(path: Path, lineno: int, s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise DatasetError(f"{path.name}:{lineno}: not an integer: {s!r}") from None


def read_meta(directory) -> dict[str, str]:
    path = Path(directory) / "meta.txt"
    meta = {}
    for lineno, line in _read_lines(path):
        if not line:
            continue
        if "=" not in line:
            raise DatasetError(f"meta.txt:{lineno}: expected key=value")
        k, val = line.split("=", 1)
        meta[k] = val
    return meta


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    for name in ("vocab.txt", "ads.txt", "impressions.txt", "meta.txt"):
        if not (d / name).exists():
            raise DatasetError(f"missing {name} in {d}")
    meta = read_meta(d)
    try:
        platform_ids = [int(x) for x in meta["platforms"].split(",")]
        n_users = int(meta["users"])
    except (KeyError, ValueError):
        raise DatasetError("meta.txt must define platforms=<ids> and users=<count>") from None
    vocab = Vocab.load(d / "vocab.txt")

    ads = []
    path = d / "ads.txt"
    for lineno, line in _read_lines(path):
        _, ad_id, title, desc = _fields(path, lineno, line, "ad", 4)
        ad_id = _int(path, lineno, ad_id)
        if ad_id != len(ads):
            raise DatasetError(f"ads.txt:{lineno}: ad ids must be consecutive from 0")
        ads.append(AdRecord(ad_id, _ids(vocab, title), _ids(vocab, desc)))

    cols: list[list[int]] = [[], [], [], []]
    path = d / "impressions.txt"
    for lineno, line in _read_lines(path):
        parts = _fields(path, lineno, line, "imp", 5)
        u, a, y, t = (_int(path, lineno, x) for x in parts[1:])
        if y not in (0, 1):
            raise DatasetError(f"impressions.txt:{lineno}: label must be 0 or 1")
        if not 0 <= u < n_users:
            raise DatasetError(f"impressions.txt:{lineno}: unknown user {u}")
        if not 0 <= a < len(ads):
            raise DatasetError(f"impressions.txt:{lineno}: unknown ad {a}")
        for c, x in zip(cols, (u, a, y, t)):
            c.append(x)
    if not cols[0]:
        raise DatasetError("impressions.txt is empty")

    behaviors: dict[int, list[BehaviorRecord]] = {}
    pattern = re.compile(r"behaviors_platform_(\d+)\.txt$")
    files = sorted(p for p in d.iterdir() if pattern.match(p.name))
    found = {int(pattern.match(p.name).group(1)): p for p in files}
    for pid in found:
        if pid not in platform_ids:
            raise DatasetError(f"{found[pid].name}: unknown platform id {pid}")
    for pid in platform_ids:
        if pid not in found:
            raise DatasetError(f"missing behaviors_platform_{pid}.txt")
        path = found[pid]
        recs = []
        for lineno, line in _read_lines(path):
            _, p, u, t, words = _fields(path, lineno, line, "beh", 5)
            p, u, t = _int(path, lineno, p), _int(path, lineno, u), _int(path, lineno, t)
            if p != pid:
                raise DatasetError(f"{path.name}:{lineno}: unknown platform id {p} in platform {pid} log")
            if not 0 <= u < n_users:
                raise DatasetError(f"{path.name}:{lineno}: unknown user {u}")
            recs.append(BehaviorRecord(p, u, t, _ids(vocab, words)))
        behaviors[pid] = recs

    meta = {k: v for k, v in meta.items() if k not in ("platforms", "users")}
    return Dataset(vocab, ads, Impressions(*cols), behaviors, n_users, meta)
