"""Byte-reproducible array containers.

``np.savez`` stamps the current time into each zip member, so two saves of
the same arrays differ. This writes the same layout (one ``.npy`` member per
array, plus ``meta.json``) with a fixed timestamp and sorted member order.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ArtifactMissing, ValidationError

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("meta.json"), json.dumps(meta, sort_keys=True, ensure_ascii=False))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(_member(f"{name}.npy"), buf.getvalue())


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissing(f"artifact not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(
                        io.BytesIO(zf.read(name)), allow_pickle=False
                    )
    except (zipfile.BadZipFile, KeyError) as exc:
        raise ValidationError(f"{path}: not a valid container ({exc})") from exc
    return meta, arrays
