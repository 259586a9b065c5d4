"""
Location text and three embeddings
==================================

Fetch geography text for each cell from a local MediaWiki stand-in, then embed
it with mean pooling (pretrained and fine-tuned) and with a small head trained
on a frozen encoder.
"""

import tempfile

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from floodlens.ingest import parse_events
from floodlens.mockwiki import MockWikiServer
from floodlens.synthetic import make_world
from floodlens.textcorpus import WikiClient, build_corpus
from floodlens.textembed import (
    TrainConfig,
    embed_corpus,
    finetune_classifier,
    label_floodiness,
    tiny_encoder,
    train_transfer_head,
)

world = make_world(n_grids=60, years=(1999, 2018), seed=2)
paths = world.write(tempfile.mkdtemp())
table = parse_events(paths["disasters"], paths["damage"], window=world.window)

###############################################################################
# Lookup order: the page's Geography section, then a "name, country" page,
# then the page summary. Cells with nothing get the literal text "missing".

with MockWikiServer(world.pages) as server:
    corpus = build_corpus(table, {e.grid for e in table.events}, WikiClient(server.url, rate_limit=None))
print(corpus.manifest[-1]["fetches"], "fetched")
for entry in list(corpus.entries.values())[:3]:
    print(entry.source.value, "|", entry.text[:70])

###############################################################################
# Auxiliary label: more than two floods on record. The encoder here is a small
# random DistilBERT so the demo runs offline; set ``name`` in
# :func:`floodlens.textembed.load_encoder` for a real checkpoint.

labels = label_floodiness(table, corpus.entries)
encoder = tiny_encoder(seed=0)
tuned, log = finetune_classifier(encoder, corpus, labels, TrainConfig(epochs=3, learning_rate=1e-3))
head = train_transfer_head(encoder, corpus, labels, TrainConfig(epochs=10, learning_rate=1e-2))
print("fine-tune val acc", log.val_accuracy, "head val acc", head.train_log.val_accuracy[-1])

###############################################################################
# How well does each embedding separate floody cells? First principal
# component, coloured by label.

y = np.array([lb.label for lb in labels])
fig, axes = plt.subplots(1, 3, figsize=(10, 3))
for ax, (arch, enc, h) in zip(axes, [("pretrained_avg", encoder, None), ("finetuned_avg", tuned, None),
                                     ("transfer_head", encoder, head)]):
    grids, emb = embed_corpus(corpus, arch, enc, h)
    centred = emb - emb.mean(0)
    pc = centred @ np.linalg.svd(centred, full_matrices=False)[2][0]
    ax.hist([pc[y == 0], pc[y == 1]], bins=15, label=["<= 2 floods", "> 2 floods"])
    ax.set_title(f"{arch} ({emb.shape[1]}-d)")
axes[0].legend()
fig.tight_layout()
fig.savefig("embeddings_pc1.png", dpi=80)
