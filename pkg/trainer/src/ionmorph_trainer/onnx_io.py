"""Minimal ONNX serialization and numpy inference for the small CNN backbone.

Writes a valid ONNX ModelProto (opset 13) by emitting the protobuf wire
format directly, and executes the op subset the backbone uses (Conv, Relu,
GlobalAveragePool, Flatten, Gemm) with numpy. This keeps the exported
scorer free of any neural-runtime dependency while remaining loadable by
standard ONNX tooling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FLOAT = 1  # TensorProto.DataType.FLOAT


# --- protobuf wire-format primitives ---


def _varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field_number: int, wire_type: int) -> bytes:
    return _varint(field_number << 3 | wire_type)


def _len_field(field_number: int, payload: bytes) -> bytes:
    return _tag(field_number, 2) + _varint(len(payload)) + payload


def _int_field(field_number: int, value: int) -> bytes:
    return _tag(field_number, 0) + _varint(value)


def _str_field(field_number: int, value: str) -> bytes:
    return _len_field(field_number, value.encode("utf-8"))


def _float_field(field_number: int, value: float) -> bytes:
    return _tag(field_number, 5) + struct.pack("<f", value)


# --- model description ---


@dataclass
class Node:
    op_type: str
    inputs: list[str]
    outputs: list[str]
    name: str = ""
    int_attrs: dict[str, int] = field(default_factory=dict)
    ints_attrs: dict[str, list[int]] = field(default_factory=dict)
    float_attrs: dict[str, float] = field(default_factory=dict)


@dataclass
class OnnxModel:
    nodes: list[Node]
    initializers: dict[str, np.ndarray]  # name -> float32 tensor
    input_name: str
    input_shape: list[int]
    output_name: str
    output_shape: list[int]
    graph_name: str = "structure_classifier"


def _attribute(name: str, *, i=None, ints=None, f=None) -> bytes:
    # AttributeProto: name=1, f=2, i=3, ints=8, type=20 (INT=2, FLOAT=1, INTS=7)
    body = _str_field(1, name)
    if i is not None:
        body += _int_field(3, i) + _int_field(20, 2)
    elif ints is not None:
        for v in ints:
            body += _int_field(8, v)
        body += _int_field(20, 7)
    elif f is not None:
        body += _float_field(2, f) + _int_field(20, 1)
    return body


def _node_proto(node: Node) -> bytes:
    body = b""
    for name in node.inputs:
        body += _str_field(1, name)
    for name in node.outputs:
        body += _str_field(2, name)
    if node.name:
        body += _str_field(3, node.name)
    body += _str_field(4, node.op_type)
    for k, v in node.int_attrs.items():
        body += _len_field(5, _attribute(k, i=v))
    for k, v in node.ints_attrs.items():
        body += _len_field(5, _attribute(k, ints=v))
    for k, v in node.float_attrs.items():
        body += _len_field(5, _attribute(k, f=v))
    return body


def _tensor_proto(name: str, array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    body = b""
    for d in arr.shape:
        body += _int_field(1, d)
    body += _int_field(2, FLOAT)
    body += _str_field(8, name)
    body += _len_field(9, arr.tobytes())
    return body


def _value_info(name: str, shape: list[int]) -> bytes:
    dims = b""
    for d in shape:
        dims += _len_field(1, _int_field(1, d))  # Dimension.dim_value
    shape_proto = dims
    tensor_type = _int_field(1, FLOAT) + _len_field(2, shape_proto)
    type_proto = _len_field(1, tensor_type)
    return _str_field(1, name) + _len_field(2, type_proto)


def save_onnx(model: OnnxModel, path) -> None:
    graph = b""
    for node in model.nodes:
        graph += _len_field(1, _node_proto(node))
    graph += _str_field(2, model.graph_name)
    for name, arr in model.initializers.items():
        graph += _len_field(5, _tensor_proto(name, arr))
    graph += _len_field(11, _value_info(model.input_name, model.input_shape))
    graph += _len_field(12, _value_info(model.output_name, model.output_shape))

    opset = _str_field(1, "") + _int_field(2, 13)
    proto = (
        _int_field(1, 8)  # ir_version
        + _str_field(2, "ionmorph-trainer")
        + _len_field(7, graph)
        + _len_field(8, opset)
    )
    with open(path, "wb") as f:
        f.write(proto)


# --- parsing ---


def _iter_fields(buf: bytes):
    pos = 0
    while pos < len(buf):
        key, pos = _read_varint(buf, pos)
        field_number, wire_type = key >> 3, key & 7
        if wire_type == 0:
            value, pos = _read_varint(buf, pos)
        elif wire_type == 2:
            length, pos = _read_varint(buf, pos)
            value = buf[pos : pos + length]
            pos += length
        elif wire_type == 5:
            value = buf[pos : pos + 4]
            pos += 4
        elif wire_type == 1:
            value = buf[pos : pos + 8]
            pos += 8
        else:
            raise ValueError(f"unsupported wire type {wire_type}")
        yield field_number, wire_type, value


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _parse_attribute(buf: bytes):
    name = ""
    value = None
    ints = []
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            name = v.decode("utf-8")
        elif fn == 3:
            value = v
        elif fn == 8:
            ints.append(v)
        elif fn == 2:
            value = struct.unpack("<f", v)[0]
    if ints:
        return name, ints
    return name, value


def _parse_node(buf: bytes) -> Node:
    node = Node(op_type="", inputs=[], outputs=[])
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            node.inputs.append(v.decode("utf-8"))
        elif fn == 2:
            node.outputs.append(v.decode("utf-8"))
        elif fn == 3:
            node.name = v.decode("utf-8")
        elif fn == 4:
            node.op_type = v.decode("utf-8")
        elif fn == 5:
            attr_name, attr_value = _parse_attribute(v)
            if isinstance(attr_value, list):
                node.ints_attrs[attr_name] = attr_value
            elif isinstance(attr_value, float):
                node.float_attrs[attr_name] = attr_value
            elif attr_value is not None:
                node.int_attrs[attr_name] = attr_value
    return node


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims = []
    name = ""
    raw = b""
    dtype = FLOAT
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            dims.append(v)
        elif fn == 2:
            dtype = v
        elif fn == 8:
            name = v.decode("utf-8")
        elif fn == 9:
            raw = v
    if dtype != FLOAT:
        raise ValueError(f"unsupported tensor data type {dtype}")
    return name, np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def _parse_value_info(buf: bytes) -> str:
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            return v.decode("utf-8")
    return ""


def load_onnx(path) -> OnnxModel:
    with open(path, "rb") as f:
        proto = f.read()
    graph_buf = None
    for fn, wt, v in _iter_fields(proto):
        if fn == 7:
            graph_buf = v
    if graph_buf is None:
        raise ValueError(f"{path}: no graph found")
    nodes = []
    initializers = {}
    input_name = output_name = ""
    for fn, wt, v in _iter_fields(graph_buf):
        if fn == 1:
            nodes.append(_parse_node(v))
        elif fn == 5:
            name, arr = _parse_tensor(v)
            initializers[name] = arr
        elif fn == 11:
            input_name = _parse_value_info(v)
        elif fn == 12:
            output_name = _parse_value_info(v)
    return OnnxModel(
        nodes=nodes,
        initializers=initializers,
        input_name=input_name,
        input_shape=[],
        output_name=output_name,
        output_shape=[],
    )


# --- numpy execution of the supported op subset ---


def _conv2d(x, weight, bias, strides, pads):
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    out_h = (xp.shape[2] - kh) // sh + 1
    out_w = (xp.shape[3] - kw) // sw + 1
    # im2col
    cols = np.empty((n, c_in * kh * kw, out_h * out_w), dtype=np.float64)
    idx = 0
    for ci in range(c_in):
        for ky in range(kh):
            for kx in range(kw):
                patch = xp[:, ci, ky : ky + out_h * sh : sh, kx : kx + out_w * sw : sw]
                cols[:, idx, :] = patch.reshape(n, -1)
                idx += 1
    w2 = weight.reshape(c_out, -1).astype(np.float64)
    out = np.einsum("of,nfp->nop", w2, cols)
    out += bias.reshape(1, c_out, 1).astype(np.float64)
    return out.reshape(n, c_out, out_h, out_w)


def run_model(model: OnnxModel, x: np.ndarray) -> np.ndarray:
    """Execute the graph on a float input of shape (N, C, H, W)."""
    values: dict[str, np.ndarray] = {model.input_name: np.asarray(x, dtype=np.float64)}
    values.update({k: v.astype(np.float64) for k, v in model.initializers.items()})
    for node in model.nodes:
        ins = [values[name] for name in node.inputs]
        if node.op_type == "Conv":
            strides = node.ints_attrs.get("strides", [1, 1])
            pads = node.ints_attrs.get("pads", [0, 0, 0, 0])
            out = _conv2d(ins[0], ins[1], ins[2], strides, pads)
        elif node.op_type == "Relu":
            out = np.maximum(ins[0], 0.0)
        elif node.op_type == "GlobalAveragePool":
            out = ins[0].mean(axis=(2, 3), keepdims=True)
        elif node.op_type == "Flatten":
            out = ins[0].reshape(ins[0].shape[0], -1)
        elif node.op_type == "Gemm":
            a, b, c = ins
            if node.int_attrs.get("transB", 0):
                b = b.T
            out = a @ b + c
        else:
            raise ValueError(f"unsupported op {node.op_type}")
        values[node.outputs[0]] = out
    return values[model.output_name]
