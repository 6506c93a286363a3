#!/usr/bin/env python3
"""
Setup verification: simulate a short dataset, track it, score it and plot it
"""

import sys
import tempfile
from pathlib import Path
from typing import Optional

from app.dataset import Dataset
from app.schemas import SimulationConfig, TrackingConfig, TrajectorySpec
from app.services import PipelineService, report_table


def check_simulation(service: PipelineService, root: Path) -> Optional[Dataset]:
    """Render five frames of the default rolling gait"""
    try:
        config = SimulationConfig(trajectory=TrajectorySpec(frames=5))
        dataset = service.simulate(config, root / "data")
        print(f"✅ Simulation: PASSED - {len(dataset)} frames in {dataset.root}")
        return dataset
    except Exception as e:
        print(f"❌ Simulation: ERROR - {str(e)}")
        return None


def check_tracking(service: PipelineService, root: Path) -> bool:
    try:
        manifest = service.track(root / "data", TrackingConfig(), root / "run")
        print(f"✅ Tracking: PASSED - {len(manifest.frame_timings)} frames")
        print(f"   Mean frame time: {manifest.timing.mean_frame_ms:.1f} ms ({manifest.timing.frame_hz:.1f} Hz)")
        if not manifest.timing.within_budget:
            print("⚠️  Timing budget exceeded on this machine")
        return True
    except Exception as e:
        print(f"❌ Tracking: ERROR - {str(e)}")
        return False


def check_evaluation(service: PipelineService, root: Path) -> bool:
    try:
        report = service.evaluate(root / "run", root / "data")
        print("✅ Evaluation: PASSED")
        print(report_table(report))
        return True
    except Exception as e:
        print(f"❌ Evaluation: ERROR - {str(e)}")
        return False


def check_plots(service: PipelineService, root: Path) -> bool:
    try:
        written = service.plot(root / "run", root / "data", root / "plots")
        count = len(written["cables"]) + len(written["rods"])
        print(f"✅ Plots: PASSED - {count} figures in {root / 'plots'}")
        return True
    except Exception as e:
        print(f"❌ Plots: ERROR - {str(e)}")
        return False


def main() -> int:
    """Run all checks"""
    print("🚀 Starting TensegrityTracker Setup Checks...\n")
    service = PipelineService(progress=False)

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        if check_simulation(service, root) is None:
            print("\n❌ Simulator is not working, stopping here.")
            return 1
        print()

        if not check_tracking(service, root):
            return 1
        print()

        ok = check_evaluation(service, root)
        print()
        ok = check_plots(service, root) and ok

    print("\n🎉 TensegrityTracker Setup Checks Completed!" if ok else "\n❌ Some checks failed")
    print("\n📋 Next Steps:")
    print("1. Simulate a full dataset: python -m app.main simulate --out runs/data")
    print("2. Track it: python -m app.main track runs/data --out runs/proposed")
    print("3. Compare ablations with --ablation naive_icp / rigid_body / no_constraints")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
