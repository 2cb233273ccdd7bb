"""Dump a gateway's block chain: numbers, hashes, transaction ops and
validity flags, plus a replay check of the world-state digest.

Run:  python scripts/inspect_ledger.py --data-dir ./healthchain-data
"""

import argparse
import json
from pathlib import Path

from healthchain.ledger import FileBlockStore, replay


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", required=True, type=Path)
    parser.add_argument("--verbose", action="store_true",
                        help="also print every transaction")
    args = parser.parse_args()

    store = FileBlockStore(args.data_dir / "blocks.dat")
    blocks = store.load()
    if not blocks:
        raise SystemExit(f"no blocks under {args.data_dir}")

    genesis = blocks[0]
    config = json.loads(genesis.config_doc.decode())
    print(f"channel {config.get('channel')!r}, {len(blocks)} blocks")
    print(f"ordering profile: {config.get('orderer')}")

    for block in blocks:
        flags = "".join("V" if v else "x" for v in block.validity)
        print(f"block {block.number:4d}  hash {block.header_hash().hex[:16]}… "
              f"prev {block.prev_hash.hex[:16]}…  txs {len(block.txs):3d} [{flags}]")
        if args.verbose:
            for tx, valid in zip(block.txs, block.validity):
                mark = "ok " if valid else "BAD"
                print(f"    {mark} {tx.tx_id.hex[:16]}… {tx.op_name} "
                      f"({len(tx.args)} args) event={tx.event!r}")

    state = replay(blocks)
    print(f"replay clean; world state: {len(state.kv)} keys, "
          f"digest {state.digest().hex[:32]}…")


if __name__ == "__main__":
    main()
