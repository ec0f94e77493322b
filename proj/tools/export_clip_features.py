#!/usr/bin/env python3
"""Export real CLIP features for the faood checkpoint adapter.

Produces, under --out:
  export.json            adapter index: dims, mini vocabulary (template +
                         class-name tokens), per-class tokenizations, and a
                         list of {context_hash, file} text-feature entries
  text_<tag>.faemb       C x d unit-norm text features for one prompt context
  <split>.faemb(.json)   image caches: global + N local features per image

The context hash matches faood::prompt_context_hash: FNV-1a 64 over the
little-endian float32 bytes of every class's prompt rows (context rows, then
class-token rows), classes in order. Exporting features for a trained bank
therefore lets `faood eval --backend clip-adapter` score a real checkpoint
without loading model weights in C++.

Requires torch + transformers and a CLIP checkpoint (default ViT-B/16).
This path is for real-data reproduction and is not exercised in CI.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
TEMPLATE = ["a", "photo", "of", "a"]


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def context_hash(per_class_rows) -> str:
    h = FNV_OFFSET
    for rows in per_class_rows:
        h = fnv1a64(np.asarray(rows, dtype="<f4").tobytes(), h)
    return f"{h:016x}"


def write_faemb(path: Path, rows: np.ndarray, dim: int, num_locals: int, sidecar=None):
    rows = np.ascontiguousarray(rows, dtype="<f4")
    assert rows.shape[1] == (1 + num_locals) * dim
    with open(path, "wb") as out:
        out.write(b"FAEMB1\x00\x00")
        out.write(struct.pack("<III", rows.shape[0], dim, num_locals))
        out.write(rows.tobytes())
    if sidecar is not None:
        with open(str(path) + ".json", "w") as out:
            json.dump(sidecar, out, indent=2)


def read_bank(path: Path):
    """Parses a FABANK1 file into (header, forced_ctx, original_ctx)."""
    blob = path.read_bytes()
    assert blob[:8] == b"FABANK1\x00", "not a bank file"
    (header_len,) = struct.unpack_from("<I", blob, 8)
    header = json.loads(blob[12 : 12 + header_len])
    offset = 12 + header_len
    token_dim = header["token_dim"]

    def take(rows):
        nonlocal offset
        count = rows * token_dim
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        return values.reshape(rows, token_dim).copy()

    return header, take(header["forced_rows"]), take(header["original_rows"])


def load_clip(model_name: str):
    import torch
    from transformers import CLIPModel, CLIPProcessor

    model = CLIPModel.from_pretrained(model_name).eval()
    processor = CLIPProcessor.from_pretrained(model_name)
    return torch, model, processor


def tokenize_words(tokenizer, text: str):
    """Sub-word pieces for one class name, without special tokens."""
    ids = tokenizer(text, add_special_tokens=False)["input_ids"]
    return [tokenizer.convert_ids_to_tokens(i) for i in ids], ids


def encode_prompt_rows(torch, model, rows_per_class):
    """Runs the text tower on explicit embedding rows: SOT + rows + EOT."""
    text_model = model.text_model
    embedding = text_model.embeddings.token_embedding
    sot = embedding.weight[49406]  # <|startoftext|>
    eot = embedding.weight[49407]
    features = []
    for rows in rows_per_class:
        rows_t = torch.tensor(np.asarray(rows, dtype=np.float32))
        seq = torch.cat([sot[None, :], rows_t, eot[None, :]], dim=0)[None, :, :]
        positions = text_model.embeddings.position_embedding.weight[: seq.shape[1]]
        hidden = seq + positions[None, :, :]
        mask = torch.full((1, 1, seq.shape[1], seq.shape[1]), float("-inf"))
        mask = torch.triu(mask, diagonal=1)
        out = text_model.encoder(inputs_embeds=hidden, causal_attention_mask=mask)
        hidden = text_model.final_layer_norm(out.last_hidden_state)
        pooled = hidden[0, seq.shape[1] - 1]  # EOT token
        feature = model.text_projection(pooled)
        feature = feature / feature.norm()
        features.append(feature.detach().numpy())
    return np.stack(features)


def encode_images(torch, model, processor, image_paths, num_locals):
    """Global feature + projected patch tokens pooled into num_locals slots."""
    from PIL import Image

    rows = []
    for path in image_paths:
        image = Image.open(path).convert("RGB")
        inputs = processor(images=image, return_tensors="pt")
        vision = model.vision_model(pixel_values=inputs["pixel_values"])
        hidden = vision.last_hidden_state[0]  # [1 + patches, width]
        pooled = model.vision_model.post_layernorm(hidden)
        global_feat = model.visual_projection(pooled[0])
        global_feat = global_feat / global_feat.norm()
        parts = [global_feat.detach().numpy()]
        if num_locals > 0:
            patches = model.visual_projection(pooled[1:])
            patches = patches / patches.norm(dim=-1, keepdim=True)
            chunks = np.array_split(patches.detach().numpy(), num_locals)
            for chunk in chunks:
                mean = chunk.mean(axis=0)
                parts.append(mean / np.linalg.norm(mean))
        rows.append(np.concatenate(parts))
    return np.stack(rows)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="openai/clip-vit-base-patch16")
    parser.add_argument("--classes", required=True,
                        help="text file with one class name per line")
    parser.add_argument("--bank", action="append", default=[],
                        help="bank file(s) whose text features to export")
    parser.add_argument("--images", action="append", default=[],
                        help="split=dir pairs of image folders to cache")
    parser.add_argument("--num-locals", type=int, default=4)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    class_names = [line.strip() for line in open(args.classes) if line.strip()]

    torch, model, processor = load_clip(args.model)
    tokenizer = processor.tokenizer
    embedding = model.text_model.embeddings.token_embedding.weight.detach().numpy()
    embed_dim = model.text_projection.out_features
    token_dim = embedding.shape[1]

    vocab, tokenization = {}, {}
    for word in TEMPLATE:
        pieces, ids = tokenize_words(tokenizer, word)
        assert len(ids) == 1, f"template word '{word}' is not a single token"
        vocab[word] = embedding[ids[0]].astype(np.float32).tolist()
    for name in class_names:
        pieces, ids = tokenize_words(tokenizer, name)
        tokenization[name] = pieces
        for piece, token_id in zip(pieces, ids):
            vocab.setdefault(piece, embedding[token_id].astype(np.float32).tolist())

    class_token_rows = {}
    for name in class_names:
        ids = tokenizer(name, add_special_tokens=False)["input_ids"]
        class_token_rows[name] = embedding[ids].astype(np.float32)

    text_entries = []

    def export_text(tag, context_rows_per_class):
        per_class, sequences = [], []
        for i, name in enumerate(class_names):
            rows = np.vstack([context_rows_per_class[i], class_token_rows[name]])
            per_class.append(rows)
            sequences.append(rows)
        features = encode_prompt_rows(torch, model, sequences)
        file_name = f"text_{tag}.faemb"
        write_faemb(out / file_name, features, embed_dim, 0)
        text_entries.append({"context_hash": context_hash(per_class), "file": file_name})

    # Manual template context (the frozen original prompt).
    manual = np.vstack([np.asarray(vocab[w], dtype=np.float32) for w in TEMPLATE])
    export_text("manual", [manual for _ in class_names])

    for bank_path in args.bank:
        header, forced, original = read_bank(Path(bank_path))
        assert header["token_dim"] == token_dim, "bank token_dim != checkpoint"
        length = header["context_len"]
        if header["shared"]:
            contexts = [forced[:length] for _ in class_names]
        else:
            contexts = [forced[i * length : (i + 1) * length] for i in range(len(class_names))]
        export_text(Path(bank_path).stem + "_forced", contexts)

    for spec in args.images:
        split, _, folder = spec.partition("=")
        paths = sorted(p for p in Path(folder).rglob("*") if p.suffix.lower() in
                       {".jpg", ".jpeg", ".png", ".bmp"})
        rows = encode_images(torch, model, processor, paths, args.num_locals)
        sidecar = [{"split": split, "label": -1, "source": str(p)} for p in paths]
        write_faemb(out / f"{split}.faemb", rows, embed_dim, args.num_locals, sidecar)
        print(f"cached {len(paths)} images for split '{split}'")

    index = {
        "kind": "clip",
        "model": args.model,
        "embed_dim": embed_dim,
        "token_dim": token_dim,
        "num_locals": args.num_locals,
        "max_context_len": 77,
        "vocab": vocab,
        "tokenization": tokenization,
        "text_features": text_entries,
        "local_feature_convention": "projected patch tokens, mean-pooled into num_locals slots",
    }
    with open(out / "export.json", "w") as f:
        json.dump(index, f)
    print(f"export written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
