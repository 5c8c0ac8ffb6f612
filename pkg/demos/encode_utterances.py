"""
Encoding variable-length utterances
===================================

Two utterance-level encodings of frame features: a bag of audio words
over a random-sample codebook, and a Fisher vector from a diagonal GMM.
Both turn a T x D frame matrix into one fixed-length vector.
"""

import numpy as np

from paralingua import boaw, fisher
from paralingua.features import boaw_table, fisher_table, fit_fisher_gmm, learn_codebooks, prepare_frames
from paralingua.synthetic import make_corpus

manifest, mats = make_corpus(n_speakers=8, utts_per_speaker=4, dim=3, seed=1)
matrices = [mats[u] for u in manifest.utterance_ids]
print(len(matrices), "utterances, frame counts", sorted({m.n_frames for m in matrices})[:5], "...")

# deltas, then z-scoring fitted on the training utterances only
train = np.array([r.split == "train" for r in manifest.records])
prep = prepare_frames(matrices, train)

# a single codebook: each frame votes for its 5 nearest words
cb = boaw.learn_codebook(prep.lld, 16, seed=0)
h = boaw.encode_boaw(cb, prep.lld[0], assignments=5)
print("histogram sums to", h.sum(), "over", cb.size_n, "words")

# the corpus helper stacks an LLD and a delta codebook side by side
cb_lld, cb_delta = learn_codebooks(prep, train, 16, seed=0)
table = boaw_table(prep, cb_lld, cb_delta)
print("BoAW table", table.vectors.shape)

# Fisher vectors: mean and std gradients, 2 * K * D values per utterance
gmm = fit_fisher_gmm(prep, train, 4, seed=0)
fv = fisher_table(prep, gmm)
print("GMM average log-likelihood", round(gmm.final_loglik, 4))
print("FV table", fv.vectors.shape, "= 2 x", gmm.n_components, "x", gmm.dim)

# a frame set that looks exactly like the training pool scores near zero
pooled = np.concatenate([prep.stacked(i) for i in range(len(matrices))])
print("FV norm of the whole pool", np.linalg.norm(fisher.encode_fisher(gmm, pooled).values).round(4))
print("median utterance FV norm", np.median(np.linalg.norm(fv.vectors, axis=1)).round(4))
