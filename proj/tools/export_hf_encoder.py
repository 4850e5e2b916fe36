#!/usr/bin/env python3
"""Convert a Hugging Face BERT masked-LM checkpoint into an aacpred base encoder directory.

    python tools/export_hf_encoder.py neuralmind/bert-base-portuguese-cased out/bertimbau-base

Writes manifest.json, vocab.txt and weights.bin. Needs torch and transformers.
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
from transformers import AutoTokenizer, BertForMaskedLM

FORMAT_VERSION = 1
WEIGHTS_VERSION = 1


def tensor_map(model):
    sd = {k: v.detach().to(torch.float32).cpu().numpy() for k, v in model.state_dict().items()}
    row = lambda v: v.reshape(1, -1)
    out = {
        "embeddings.word": sd["bert.embeddings.word_embeddings.weight"],
        "embeddings.position": sd["bert.embeddings.position_embeddings.weight"],
        "embeddings.token_type": sd["bert.embeddings.token_type_embeddings.weight"],
        "embeddings.ln.gamma": row(sd["bert.embeddings.LayerNorm.weight"]),
        "embeddings.ln.beta": row(sd["bert.embeddings.LayerNorm.bias"]),
    }
    linear = {
        "attn.q": "attention.self.query",
        "attn.k": "attention.self.key",
        "attn.v": "attention.self.value",
        "attn.o": "attention.output.dense",
        "ffn.in": "intermediate.dense",
        "ffn.out": "output.dense",
    }
    norms = {"attn.ln": "attention.output.LayerNorm", "ffn.ln": "output.LayerNorm"}
    for i in range(model.config.num_hidden_layers):
        src = f"bert.encoder.layer.{i}."
        dst = f"layer.{i}."
        # torch Linear stores (out, in); the encoder multiplies x by an (in, out) matrix
        for ours, theirs in linear.items():
            out[dst + ours + ".w"] = sd[src + theirs + ".weight"].T
            out[dst + ours + ".b"] = row(sd[src + theirs + ".bias"])
        for ours, theirs in norms.items():
            out[dst + ours + ".gamma"] = row(sd[src + theirs + ".weight"])
            out[dst + ours + ".beta"] = row(sd[src + theirs + ".bias"])
    out["head.transform.w"] = sd["cls.predictions.transform.dense.weight"].T
    out["head.transform.b"] = row(sd["cls.predictions.transform.dense.bias"])
    out["head.ln.gamma"] = row(sd["cls.predictions.transform.LayerNorm.weight"])
    out["head.ln.beta"] = row(sd["cls.predictions.transform.LayerNorm.bias"])
    bias = sd.get("cls.predictions.bias", sd.get("cls.predictions.decoder.bias"))
    out["head.bias"] = row(bias)
    return out


def write_weights(path, tensors):
    with open(path, "wb") as f:
        f.write(b"AACW")
        f.write(struct.pack("<II", WEIGHTS_VERSION, len(tensors)))
        for name, value in tensors.items():
            value = np.ascontiguousarray(value, dtype="<f4")
            rows, cols = value.shape
            encoded = name.encode()
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", rows, cols))
            f.write(value.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", help="hub id or local directory")
    ap.add_argument("out", type=Path)
    ap.add_argument("--name", help="encoder id recorded in the manifest (default: model)")
    args = ap.parse_args()

    model = BertForMaskedLM.from_pretrained(args.model)
    model.eval()
    tok = AutoTokenizer.from_pretrained(args.model)
    cfg = model.config
    if cfg.hidden_act != "gelu":
        raise SystemExit(f"unsupported activation {cfg.hidden_act!r}")

    vocab = [t for t, _ in sorted(tok.get_vocab().items(), key=lambda kv: kv[1])]
    if len(vocab) != cfg.vocab_size:
        raise SystemExit(f"tokenizer has {len(vocab)} entries, model expects {cfg.vocab_size}")
    for special in ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"):
        if special not in vocab:
            raise SystemExit(f"vocabulary lacks {special}")

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "vocab.txt").write_text("".join(t + "\n" for t in vocab), encoding="utf-8")
    write_weights(args.out / "weights.bin", tensor_map(model))
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "base",
        "encoder_id": args.name or str(args.model),
        "lowercase": bool(getattr(tok, "do_lower_case", False)),
        "encoder": {
            "vocab_size": cfg.vocab_size,
            "hidden": cfg.hidden_size,
            "layers": cfg.num_hidden_layers,
            "heads": cfg.num_attention_heads,
            "intermediate": cfg.intermediate_size,
            "max_positions": cfg.max_position_embeddings,
            "type_vocab": cfg.type_vocab_size,
            "ln_eps": cfg.layer_norm_eps,
        },
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({cfg.num_hidden_layers} layers, h={cfg.hidden_size}, {len(vocab)} tokens)")


if __name__ == "__main__":
    main()
