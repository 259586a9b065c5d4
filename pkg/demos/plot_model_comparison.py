"""
Does text help? Baseline, statistics, statistics plus text
==========================================================

Train the boosted-tree classifier with and without the transfer-head
embedding and compare against the persistence baseline on held-out examples.
"""

import tempfile

import matplotlib
matplotlib.use("Agg")

from floodlens.dataset import DatasetConfig, assemble
from floodlens.evalmetrics import Run, build_report, plot_roc
from floodlens.ingest import parse_events
from floodlens.mockwiki import MockWikiServer
from floodlens.model import SearchConfig, baseline_predict, predict_proba, train
from floodlens.synthetic import make_world
from floodlens.textcorpus import WikiClient, build_corpus
from floodlens.textembed import TrainConfig, embed_corpus, label_floodiness, tiny_encoder, train_transfer_head

world = make_world(n_grids=80, years=(1996, 2018), seed=0)
paths = world.write(tempfile.mkdtemp())
table = parse_events(paths["disasters"], paths["damage"], window=world.window)
with MockWikiServer(world.pages) as server:
    corpus = build_corpus(table, {e.grid for e in table.events}, WikiClient(server.url, rate_limit=None))

encoder = tiny_encoder()
head = train_transfer_head(encoder, corpus, label_floodiness(table, corpus.entries), TrainConfig())
grids, values = embed_corpus(corpus, "transfer_head", encoder, head)
embeddings = dict(zip(grids.tolist(), values))

###############################################################################
# A reduced search grid keeps this quick; the pipeline default searches 18
# combinations.

search = SearchConfig(grid={"max_depth": [3, 5], "learning_rate": [0.1], "n_estimators": [100]})
runs = []
for horizon in (1, 2):
    for name, emb in (("statistical", None), ("transfer_head", embeddings)):
        split = assemble(table, None, emb, horizon, seed=0, config=DatasetConfig(window=world.window),
                         architecture=name)
        model = train(split, search, seed=0)
        test = split.test
        runs.append(Run(name, horizon, predict_proba(model, test), test.y, len(split.selected_feature_indices)))
        print(horizon, name, model.best_hyperparameters, "cv auc %.3f" % model.cv_auc)
    runs.append(Run("baseline", horizon, baseline_predict(test), test.y, 1))
    plot_roc(runs[-2].scores, test.y, f"roc_transfer_head_{horizon}.png")

report = build_report(runs)
print(report.to_text())
