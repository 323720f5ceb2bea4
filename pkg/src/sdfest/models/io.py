"""Model checkpoints: parameter files plus a JSON manifest per directory.

Layout (documented in the README): each checkpoint directory holds
``manifest.json`` with the model kind and architecture, ``*.npz`` parameter
files in the versioned flat-layout format, and ensemble members in
``member_<k>/`` subdirectories.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..netcore import FeedforwardSpec, LstmSpec, NetworkParams
from .forecast import ForecastModel
from .gan import ConditionalModel, EnsembleModel, SdfModel
from .linear import LinearSdfModel


class CheckpointError(ValueError):
    """Checkpoint directory is missing or malformed."""


def _ffn_spec_payload(spec: FeedforwardSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "hidden_dims": list(spec.hidden_dims),
        "output_dim": spec.output_dim,
        "keep_prob": spec.keep_prob,
    }


def _ffn_spec_from(payload: dict) -> FeedforwardSpec:
    return FeedforwardSpec(
        input_dim=payload["input_dim"],
        hidden_dims=tuple(payload["hidden_dims"]),
        output_dim=payload["output_dim"],
        keep_prob=payload["keep_prob"],
    )


def save_model(model, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(model, SdfModel):
        manifest = {
            "kind": "sdf",
            "ffn_spec": _ffn_spec_payload(model.ffn_spec),
            "lstm_spec": None
            if model.lstm_spec is None
            else {"input_dim": model.lstm_spec.input_dim, "state_dim": model.lstm_spec.state_dim},
            "char_names": model.char_names,
            "macro_names": model.macro_names,
        }
        model.ffn_params.save(directory / "ffn.npz")
        if model.lstm_params is not None:
            model.lstm_params.save(directory / "lstm.npz")
    elif isinstance(model, EnsembleModel):
        manifest = {"kind": "ensemble", "n_members": len(model.members)}
        for k, member in enumerate(model.members):
            save_model(member, directory / f"member_{k}")
    elif isinstance(model, LinearSdfModel):
        manifest = {
            "kind": "linear",
            "factor_names": model.factor_names,
            "legs": model.legs,
            "split_legs": model.split_legs,
            "include_macro": model.include_macro,
        }
        np.save(directory / "coef.npy", model.coef)
    elif isinstance(model, ForecastModel):
        manifest = {
            "kind": "forecast",
            "spec": _ffn_spec_payload(model.spec),
            "include_macro": model.include_macro,
            "char_names": model.char_names,
            "n_members": len(model.member_params),
        }
        for k, params in enumerate(model.member_params):
            params.save(directory / f"member_{k}.npz")
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_model(directory):
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"no manifest in {directory}")
    manifest = json.loads(manifest_path.read_text())
    kind = manifest.get("kind")
    if kind == "sdf":
        lstm_spec = (
            None
            if manifest["lstm_spec"] is None
            else LstmSpec(**manifest["lstm_spec"])
        )
        return SdfModel(
            ffn_spec=_ffn_spec_from(manifest["ffn_spec"]),
            ffn_params=NetworkParams.load(directory / "ffn.npz"),
            lstm_spec=lstm_spec,
            lstm_params=None
            if lstm_spec is None
            else NetworkParams.load(directory / "lstm.npz"),
            char_names=manifest["char_names"],
            macro_names=manifest["macro_names"],
        )
    if kind == "ensemble":
        members = [
            load_model(directory / f"member_{k}") for k in range(manifest["n_members"])
        ]
        return EnsembleModel(members)
    if kind == "linear":
        return LinearSdfModel(
            coef=np.load(directory / "coef.npy"),
            factor_names=manifest["factor_names"],
            legs=manifest["legs"],
            split_legs=manifest["split_legs"],
            include_macro=manifest["include_macro"],
        )
    if kind == "forecast":
        return ForecastModel(
            spec=_ffn_spec_from(manifest["spec"]),
            member_params=[
                NetworkParams.load(directory / f"member_{k}.npz")
                for k in range(manifest["n_members"])
            ],
            include_macro=manifest["include_macro"],
            char_names=manifest["char_names"],
        )
    raise CheckpointError(f"unknown checkpoint kind {kind!r} in {directory}")
