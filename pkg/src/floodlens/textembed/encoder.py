"""Transformer encoder access: tokenization and per-token hidden states.

Two backbones share one interface:

* a pretrained DistilBERT-family checkpoint loaded through ``transformers``
  (``name="distilbert-base-uncased"`` or a local path), and
* ``name="tiny"``: a small randomly initialised DistilBERT with an in-memory
  WordPiece vocabulary. It needs no downloads, so tests and the synthetic
  pipeline run hermetically.
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass

import numpy as np
import torch

TINY_WORDS = """
the of and in a to is by with its on as at from for are was which that it has
this an be or its city town region area district province state county country
capital population located lies north south east west northern southern eastern
western central coast coastal sea ocean bay gulf harbor harbour island islands
river rivers delta valley basin plain plains floodplain lowland lowlands wetland
wetlands marsh swamp lake lakes stream streams tributary estuary lagoon monsoon
rain rainfall wet dry arid desert mountain mountains hill hills highland highlands
plateau range peak elevation sea level above below km square miles climate
tropical temperate subtropical continental mediterranean forest forests savanna
grassland farmland agriculture agricultural terrain flat rugged steep volcanic
border borders bordered surrounded between near along part large small major
""".split()

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


class EncoderUnavailable(RuntimeError):
    """Encoder weights could not be loaded or failed checksum pinning."""


def tiny_vocab() -> list[str]:
    chars = list(string.ascii_lowercase + string.digits + string.punctuation)
    vocab = SPECIALS + chars + ["##" + c for c in string.ascii_lowercase + string.digits]
    vocab += [w for w in dict.fromkeys(TINY_WORDS) if w not in vocab]
    return vocab


def _tiny_tokenizer(max_length: int):
    from tokenizers import Tokenizer, normalizers, pre_tokenizers, processors
    from tokenizers.models import WordPiece
    from transformers import PreTrainedTokenizerFast

    vocab = {tok: i for i, tok in enumerate(tiny_vocab())}
    tok = Tokenizer(WordPiece(vocab, unk_token="[UNK]", max_input_chars_per_word=100))
    tok.normalizer = normalizers.BertNormalizer(lowercase=True, strip_accents=True)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        model_max_length=max_length,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )


def backbone_checksum(model: torch.nn.Module) -> str:
    """sha256 over every parameter and buffer, in state-dict order."""
    h = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class TokenEmbeddingSequence:
    matrix: np.ndarray  # T x H
    attention_mask: np.ndarray  # T booleans

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1:
            raise ValueError("token matrix must be T x H with T >= 1")
        if self.attention_mask.shape != (self.matrix.shape[0],):
            raise ValueError("attention mask length must equal token count")


class Encoder:
    """Tokenizer plus backbone, always run in inference mode."""

    def __init__(self, name: str, tokenizer, model: torch.nn.Module, max_length: int, seed: int = 0):
        self.name = name
        self.tokenizer = tokenizer
        self.model = model.eval()
        self.max_length = max_length
        self.seed = seed
        self.finetuned = False

    @property
    def hidden_size(self) -> int:
        cfg = self.model.config
        return getattr(cfg, "dim", None) or cfg.hidden_size

    def checksum(self) -> str:
        return backbone_checksum(self.model)

    def tokenize(self, texts: list[str]) -> dict[str, torch.Tensor]:
        return self.tokenizer(
            texts, padding=True, truncation=True, max_length=self.max_length, return_tensors="pt"
        )

    @torch.no_grad()
    def hidden_states(self, texts: list[str], layer: str = "second_to_last") -> list[TokenEmbeddingSequence]:
        """Per-token states of the chosen layer for each text (padding removed)."""
        index = {"second_to_last": -2, "last": -1}[layer]
        batch = self.tokenize(texts)
        self.model.eval()
        out = self.model(**batch, output_hidden_states=True)
        states = out.hidden_states[index].double().numpy()
        masks = batch["attention_mask"].numpy().astype(bool)
        seqs = []
        for s, m in zip(states, masks):
            t = int(m.sum())
            seqs.append(TokenEmbeddingSequence(s[:t].copy(), m[:t].copy()))
        return seqs

    def clone(self) -> "Encoder":
        import copy

        other = Encoder(self.name, self.tokenizer, copy.deepcopy(self.model), self.max_length, self.seed)
        other.finetuned = self.finetuned
        return other


def tiny_encoder(seed: int = 0, dim: int = 32, n_layers: int = 3, max_length: int = 128) -> Encoder:
    from transformers import DistilBertConfig, DistilBertModel

    tokenizer = _tiny_tokenizer(max_length)
    config = DistilBertConfig(
        vocab_size=len(tokenizer),
        dim=dim,
        hidden_dim=4 * dim,
        n_layers=n_layers,
        n_heads=2,
        max_position_embeddings=max_length,
        pad_token_id=0,
    )
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    model = DistilBertModel(config)
    torch.random.set_rng_state(gen_state)
    return Encoder("tiny", tokenizer, model, max_length, seed)


def load_encoder(
    name: str = "tiny",
    seed: int = 0,
    max_length: int | None = None,
    expected_checksum: str | None = None,
) -> Encoder:
    """Load a backbone by name; ``expected_checksum`` pins the weights."""
    if name == "tiny":
        enc = tiny_encoder(seed=seed, max_length=max_length or 128)
    else:
        try:
            from transformers import AutoModel, AutoTokenizer

            tokenizer = AutoTokenizer.from_pretrained(name)
            model = AutoModel.from_pretrained(name)
        except Exception as exc:  # transformers raises a zoo of types here
            raise EncoderUnavailable(f"cannot load encoder {name!r}: {exc}") from exc
        limit = max_length or min(tokenizer.model_max_length, 512)
        enc = Encoder(name, tokenizer, model, limit, seed)
    if expected_checksum and enc.checksum() != expected_checksum:
        raise EncoderUnavailable(
            f"encoder {name!r} checksum {enc.checksum()} != pinned {expected_checksum}"
        )
    return enc


def encode_tokens(encoder: Encoder, text: str, layer: str = "second_to_last") -> TokenEmbeddingSequence:
    if not text:
        raise ValueError("text must be non-empty")
    return encoder.hidden_states([text], layer)[0]


def mean_pool(seq: TokenEmbeddingSequence) -> np.ndarray:
    """Mean of the token rows whose mask entry is true."""
    mask = np.asarray(seq.attention_mask, dtype=bool)
    if not mask.any():
        raise ValueError("cannot pool a sequence with an all-false mask")
    return np.asarray(seq.matrix, dtype=np.float64)[mask].mean(axis=0)
