"""Multilingual patent prior-art retrieval.

Library layout: ``corpus`` (records, names, citations, metadata store),
``analyze``/``terminology`` (term extraction), ``index`` (meta-documents and
inverted indexes), ``retrieve`` (KL and BM25 scoring), ``workingset``
(candidate pools), ``regress``/``fusion``/``rerank`` (learned merging and
boosting), ``evaluate`` (metrics), ``syngen`` (synthetic corpora) and ``cli``
(the batch driver).
"""

__version__ = "0.1.0"
