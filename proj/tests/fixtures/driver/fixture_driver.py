"""Test-only stand-in for the sandbox driver: runs golden and candidate sources in separate
namespaces over the manifest inputs and streams raw results, one document per line."""
import json
import math
import sys


def decode(v):
    if isinstance(v, dict):
        if "complex" in v:
            return complex(v["complex"][0], v["complex"][1])
        if "float" in v:
            return float(v["float"])
        raise ValueError("unknown tagged value")
    if isinstance(v, list):
        return tuple(decode(x) for x in v)
    return v


def encode(v):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        if math.isnan(v):
            return {"float": "nan"}
        if math.isinf(v):
            return {"float": "inf" if v > 0 else "-inf"}
        return v
    if isinstance(v, complex):
        return {"complex": [encode(v.real), encode(v.imag)]}
    if isinstance(v, (list, tuple)):
        return [encode(x) for x in v]
    raise TypeError("cannot transport %s" % type(v).__name__)


def load(source, name):
    ns = {"__name__": "guest"}
    try:
        exec(compile(source, "<guest>", "exec"), ns)
    except Exception as e:
        return None, "%s: %s" % (type(e).__name__, e)
    if name not in ns:
        return None, "NameError: name '%s' is not defined" % name
    return ns[name], None


def side(fn, err, args):
    if err is not None:
        return {"error": err}
    try:
        return {"value": encode(fn(*args))}
    except Exception as e:
        return {"error": "%s: %s" % (type(e).__name__, e)}


def main():
    with open(sys.argv[1]) as f:
        m = json.load(f)
    name = m["function_name"]
    g, gerr = load(m["golden_source"], name)
    c, cerr = load(m["candidate_source"], name)
    counts = {"golden_errors": 0, "candidate_errors": 0}
    for i, raw in enumerate(m["test_inputs"]):
        args = [decode(x) for x in raw]
        gr = side(g, gerr, args)
        cr = side(c, cerr, args)
        counts["golden_errors"] += "error" in gr
        counts["candidate_errors"] += "error" in cr
        print(json.dumps({"index": i, "golden": gr, "candidate": cr}), flush=True)
    counts["cases"] = len(m["test_inputs"])
    print(json.dumps({"summary": counts}), flush=True)


if __name__ == "__main__":
    main()
