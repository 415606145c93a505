"""Run the ten acceptance criteria and print one PASS/FAIL line each.

    python scripts/run_acceptance.py            # all criteria
    python scripts/run_acceptance.py 1 4 7      # a subset
"""

import runpy
import sys
import time
from pathlib import Path

mod = runpy.run_path(str(Path(__file__).resolve().parents[1] / "tests" / "test_acceptance.py"))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    wanted = [int(a) for a in argv] or list(range(1, 11))
    passed = 0
    for k in wanted:
        t = time.perf_counter()
        ok = mod["CRITERIA"][k - 1]()
        passed += bool(ok)
        detail = mod["RESULTS"][k][1]
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail} [{time.perf_counter() - t:.1f}s]",
              flush=True)
    print(f"{passed}/{len(wanted)} passed")
    return 0 if passed == len(wanted) else 1


if __name__ == "__main__":
    sys.exit(main())
