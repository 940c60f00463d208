from dsvpr.retrieval.db import DbEntry, DescriptorDb, build_db, decode_db, encode_db, load_db, persist_db
from dsvpr.retrieval.search import GroundTruth, RecallReport, recall_at_n, search_topk

__all__ = [
    "DbEntry", "DescriptorDb", "GroundTruth", "RecallReport", "build_db", "decode_db", "encode_db",
    "load_db", "persist_db", "recall_at_n", "search_topk",
]
