"""Export a trained checkpoint as an external scorer for the picking CLI.

Produces two artifacts in the output directory: `model.onnx` holding the
inference graph, and an executable `scorer` wrapper that loads it and
answers the stdio JSON scoring protocol with six class probabilities.
"""

from __future__ import annotations

import os
import stat
from pathlib import Path

import numpy as np

from .errors import ExportFailure
from .model import TinyStructureNet
from .onnx_io import Node, OnnxModel, load_onnx, run_model, save_onnx
from .train import load_checkpoint

_WRAPPER = """\
#!/usr/bin/env python3
\"\"\"Stdio scoring wrapper around the exported ONNX structure classifier.\"\"\"
import base64
import json
import sys
from pathlib import Path

import numpy as np

from ionmorph_trainer.onnx_io import load_onnx, run_model

model = load_onnx(Path(__file__).resolve().parent / "model.onnx")
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    req = json.loads(line)
    if req.get("dtype") != "f32le":
        raise SystemExit(f"unsupported dtype {req.get('dtype')!r}")
    img = np.frombuffer(base64.b64decode(req["data"]), dtype="<f4")
    img = img.reshape(req["shape"]).astype(np.float64)
    logits = run_model(model, img[None, None, :, :])[0]
    e = np.exp(logits - logits.max())
    probs = e / e.sum()
    sys.stdout.write(json.dumps({"id": req["id"], "probs": probs.tolist()}) + "\\n")
    sys.stdout.flush()
"""


def model_to_onnx(model: TinyStructureNet) -> OnnxModel:
    """Translate the torch module into the equivalent inference graph."""
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    conv_attrs = {"strides": [2, 2], "pads": [1, 1, 1, 1]}
    nodes = [
        Node("Conv", ["image", "conv1.weight", "conv1.bias"], ["c1"],
             name="conv1", ints_attrs=dict(conv_attrs)),
        Node("Relu", ["c1"], ["r1"], name="relu1"),
        Node("Conv", ["r1", "conv2.weight", "conv2.bias"], ["c2"],
             name="conv2", ints_attrs=dict(conv_attrs)),
        Node("Relu", ["c2"], ["r2"], name="relu2"),
        Node("Conv", ["r2", "conv3.weight", "conv3.bias"], ["c3"],
             name="conv3", ints_attrs=dict(conv_attrs)),
        Node("Relu", ["c3"], ["r3"], name="relu3"),
        Node("GlobalAveragePool", ["r3"], ["gap"], name="gap"),
        Node("Flatten", ["gap"], ["flat"], name="flatten", int_attrs={"axis": 1}),
        Node("Gemm", ["flat", "head.weight", "head.bias"], ["logits"],
             name="head", int_attrs={"transB": 1}),
    ]
    initializers = {
        name: state[name]
        for name in (
            "conv1.weight", "conv1.bias",
            "conv2.weight", "conv2.bias",
            "conv3.weight", "conv3.bias",
            "head.weight", "head.bias",
        )
    }
    return OnnxModel(
        nodes=nodes,
        initializers=initializers,
        input_name="image",
        input_shape=[1, 1, 224, 224],
        output_name="logits",
        output_shape=[1, 6],
    )


def export_scorer(checkpoint_path: str | Path, out_dir: str | Path) -> str:
    """Write model.onnx plus the wrapper executable; returns the command."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        model, _ = load_checkpoint(checkpoint_path)
    except Exception as e:
        raise ExportFailure(f"cannot load checkpoint {checkpoint_path}: {e}") from e
    onnx_model = model_to_onnx(model)
    onnx_path = out_dir / "model.onnx"
    save_onnx(onnx_model, onnx_path)

    # verify the written file executes and matches the framework on noise
    rng = np.random.default_rng(0)
    probe = rng.random((1, 1, 224, 224))
    import torch

    with torch.no_grad():
        want = model(torch.as_tensor(probe, dtype=torch.float32)).numpy()
    got = run_model(load_onnx(onnx_path), probe)
    if int(np.argmax(got)) != int(np.argmax(want)):
        raise ExportFailure("exported graph disagrees with framework inference")

    wrapper = out_dir / "scorer"
    wrapper.write_text(_WRAPPER)
    wrapper.chmod(wrapper.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return str(wrapper)


def predict_probs(onnx_path: str | Path, image: np.ndarray) -> np.ndarray:
    """Run the exported graph on one 2D image; returns six probabilities."""
    logits = run_model(load_onnx(onnx_path), np.asarray(image)[None, None, :, :])[0]
    e = np.exp(logits - logits.max())
    return e / e.sum()
