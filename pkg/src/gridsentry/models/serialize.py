"""Self-describing model artifacts: a zip of a JSON header plus .npy arrays."""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from ..errors import ValidationError

FORMAT_VERSION = 1
# fixed member timestamps keep artifacts byte-identical across reruns
_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_model(model, spec, path: str | Path, extra: dict | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "spec": spec.to_dict(),
        "n_classes": model.n_classes_,
        "n_features": model.n_features_,
        **(extra or {}),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(zipfile.ZipInfo("header.json", _EPOCH),
                    json.dumps(header, sort_keys=True, indent=1))
        for key, arr in sorted(model.get_state().items()):
            buf = io.BytesIO()
            np.save(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{key}.npy", _EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def load_model(path: str | Path):
    """Return ``(model, spec, header)``; rejects other format versions."""
    from . import ModelSpec

    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise ValidationError(f"{path}: not a model artifact") from exc
    with zf:
        try:
            header = json.loads(zf.read("header.json"))
        except KeyError as exc:
            raise ValidationError(f"{path}: missing header") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise ValidationError(
                f"{path}: artifact format {header.get('format_version')} != {FORMAT_VERSION}")
        state = {}
        for name in zf.namelist():
            if name.endswith(".npy"):
                state[name[:-4]] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    spec = ModelSpec.from_dict(header["spec"])
    model = spec.build()
    model.n_classes_ = int(header["n_classes"])
    model.n_features_ = int(header["n_features"])
    model.set_state(state)
    return model, spec, header
