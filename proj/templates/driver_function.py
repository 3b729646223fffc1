{candidate_code}


if __name__ == "__main__":
    import json as _clarify_json
    import sys as _clarify_sys

    _clarify_args = _clarify_json.loads(_clarify_sys.stdin.read() or "[]")
    _clarify_result = {entry_point}(*_clarify_args)
    print(_clarify_json.dumps(_clarify_result, sort_keys=True, separators=(",", ":")))
