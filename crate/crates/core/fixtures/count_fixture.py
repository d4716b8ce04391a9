"""Independent counts over a corpus JSONL file, used as a frozen test oracle.

Usage: python3 count_fixture.py synthetic_200.jsonl > synthetic_200.counts.json
"""
import collections
import json
import sys


def main(path):
    docs, cites = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["kind"] == "patent":
                docs[rec["doc_id"]] = rec
            else:
                cites.append(rec)
    x_citing = {
        c["citing_id"]
        for c in cites
        if c["category"] == "X" and c["source"] == "EXAMINER" and c["cited_id"] in docs
    }
    counts = {
        "doc_count": len(docs),
        "citation_count": len(cites),
        "family_count": len({d["family_id"] for d in docs.values()}),
        "jurisdiction": collections.Counter(d["jurisdiction"] for d in docs.values()),
        "language": collections.Counter(d["language"] for d in docs.values()),
        "ipc_section": collections.Counter(d["ipc_codes"][0][0] for d in docs.values()),
        "category": collections.Counter(c["category"] for c in cites),
        "x_citing_patents": len(x_citing),
        "x_citing_language": collections.Counter(docs[i]["language"] for i in x_citing),
    }
    json.dump(counts, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
