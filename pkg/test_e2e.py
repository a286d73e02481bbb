"""
Wing Digital Twin E2E Test
==========================
자동화된 E2E 테스트: gen → calibrate → plan → simulate, all through app.main

    python test_e2e.py          # prints a pass/fail report
    pytest test_e2e.py          # same pipeline as one test
"""

import json
import sys
import tempfile
from pathlib import Path

import pandas as pd

# 테스트 결과 저장
RESULTS = {
    "passed": [],
    "failed": [],
}


def log_pass(test_name, detail=""):
    RESULTS["passed"].append(test_name)
    print(f"  ✅ {test_name}" + (f" - {detail}" if detail else ""))


def log_fail(test_name, error=""):
    RESULTS["failed"].append((test_name, error))
    print(f"  ❌ {test_name}" + (f" - {error}" if error else ""))


def section(title):
    print("\n" + "=" * 60)
    print(f"🧪 {title}")
    print("=" * 60)


def check(test_name, ok, detail=""):
    if ok:
        log_pass(test_name, detail)
    else:
        log_fail(test_name, detail)


def run_e2e(workdir: Path) -> dict:
    """Run the whole pipeline inside workdir; returns RESULTS"""
    from app import main
    from surrogates import default_surrogate_config, modal_frequencies
    from synthetic_data import generate_ringdown, ringdown_frame

    RESULTS["passed"].clear()
    RESULTS["failed"].clear()

    # =============================================
    # 1. 합성 입력 (Synthetic inputs)
    # =============================================
    section("1. 합성 입력 생성")
    pairs = workdir / "pairs.csv"
    check("gen pairs", main(["gen", "pairs", "--seed", "42", "--out", str(pairs)]) == 0)
    check("pairs 8행", len(pd.read_csv(pairs)) == 8)

    f1, f2 = modal_frequencies(default_surrogate_config(), 100.0, 272.0, 1.0073)
    ringdowns = []
    for i in range(3):
        path = workdir / f"ringdown_{i}.csv"
        ringdown_frame(generate_ringdown(f1, f2, noise_sigma=1.0, seed=i)).to_csv(path, index=False)
        ringdowns.append(str(path))
    log_pass("ringdown 3개", f"f1={f1:.2f} Hz, f2={f2:.2f} Hz")

    # =============================================
    # 2. 보정 (Calibration)
    # =============================================
    section("2. 보정")
    stiffness_dir = workdir / "stiffness"
    code = main(["calibrate", "stiffness", "--data", str(pairs), "--seed", "42",
                 "--particles", "20000", "--kde-samples", "5000", "--out", str(stiffness_dir)])
    check("calibrate stiffness", code == 0, f"exit {code}")
    posterior_path = stiffness_dir / "stiffness_posterior.json"
    if posterior_path.exists():
        posterior = json.loads(posterior_path.read_text())
        check("e 사후분포", 0.95 < posterior["mean"] < 1.06, f"e = {posterior['mean']:.4f}")

    modal_dir = workdir / "modal"
    code = main(["calibrate", "modal", "--ringdown", *ringdowns, "--posterior", str(posterior_path),
                 "--samples", "20", "--seed", "42", "--out", str(modal_dir)])
    check("calibrate modal", code == 0, f"exit {code}")

    # =============================================
    # 3. 정책 (Policy)
    # =============================================
    section("3. 정책")
    plan_dir = workdir / "plan"
    check("plan", main(["plan", "--out", str(plan_dir)]) == 0)
    policy = json.loads((plan_dir / "policy.json").read_text())
    threshold = all((s["action"] == "2g") == (s["z1"] >= 60) for s in policy["states"])
    check("임계값 정책 (z1 ≥ 60 → 2g)", threshold)

    # =============================================
    # 4. 미션 (Mission)
    # =============================================
    section("4. 미션")
    runs = {}
    for transport in ("inproc", "socket"):
        out = workdir / f"mission_{transport}"
        code = main(["simulate", "--steps", "50", "--seed", "42", "--transport", transport, "--out", str(out)])
        check(f"simulate ({transport})", code == 0, f"exit {code}")
        runs[transport] = out / "mission_log.jsonl"

    if all(p.exists() for p in runs.values()):
        same = runs["inproc"].read_bytes() == runs["socket"].read_bytes()
        check("transport 간 로그 일치", same)
        summary = pd.read_csv(workdir / "mission_inproc" / "mission_summary.csv")
        fallback = summary.loc[summary["u"] == "2g", "t"]
        first = int(fallback.iloc[0]) if len(fallback) else None
        check("2g fallback 시점", first is not None and 32 <= first <= 34, f"t = {first}")

    return RESULTS


def report() -> int:
    section("📊 테스트 결과 요약")
    passed, failed = len(RESULTS["passed"]), len(RESULTS["failed"])
    total = passed + failed
    print(f"\n총 {total}개 테스트")
    print(f"  ✅ 통과: {passed}")
    print(f"  ❌ 실패: {failed}")
    success_rate = (passed / total * 100) if total > 0 else 0
    print(f"\n🎯 성공률: {success_rate:.1f}%")
    if failed:
        print("\n❌ 실패한 테스트:")
        for test_name, error in RESULTS["failed"]:
            print(f"  - {test_name}: {error}")
        return 1
    print("\n🎉 E2E 테스트 통과!")
    return 0


def test_full_pipeline(tmp_path, monkeypatch):
    monkeypatch.delenv("TWIN_SEED", raising=False)
    results = run_e2e(tmp_path)
    assert results["failed"] == []
    assert len(results["passed"]) >= 10


if __name__ == "__main__":
    with tempfile.TemporaryDirectory(prefix="wing_twin_e2e_") as tmp:
        run_e2e(Path(tmp))
    # 종료 코드
    sys.exit(report())
