#!/usr/bin/env python3
"""
MOTS Runner - One-shot closed loop on a profile
"""

import argparse
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from client import MOTSClient
from core.exceptions import ConfigurationError, DataFormatError


def main() -> int:
    parser = argparse.ArgumentParser(description="Run gen -> train-seg -> train-embed -> track -> eval")
    parser.add_argument("--profile", help="Profile name (default: $MOTS_PROFILE or small)")
    parser.add_argument("--config", help="YAML overrides")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--runs-dir")
    parser.add_argument("--log-level")
    args = parser.parse_args()

    print("🎞️ SegTrack MOTS - full pipeline")
    print("=" * 60)
    client = MOTSClient(args.profile, args.config, args.seed, args.runs_dir, args.log_level)
    try:
        result = client.run_pipeline(sys.argv[1:])
    except ConfigurationError as e:
        print(f"\n❌ {e}")
        return 2
    except DataFormatError as e:
        print(f"\n❌ {e}")
        return 3

    metrics = result.get("outputs", {}).get("metrics") or {}
    if "all.sMOTSA" in metrics:
        print(f"sMOTSA={metrics['all.sMOTSA']} MOTSA={metrics['all.MOTSA']} IDS={metrics['all.IDS']}")
    return 0 if result.get("success") else 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n⚠️ Pipeline interrupted by user")
        sys.exit(130)
