"""Node count, edge count, mean degree and diameter for every preset."""
from covroute.netgraph import PRESETS, network_stats, preset


def main():
    print(f"{'network':<10} {'nodes':>6} {'edges':>6} {'mean deg':>9} {'diameter':>9}")
    for name in PRESETS:
        s = network_stats(preset(name))
        print(f"{name:<10} {s.node_count:>6} {s.edge_count:>6} {s.mean_degree:>9.2f} {s.diameter:>9.0f}")


if __name__ == "__main__":
    main()
