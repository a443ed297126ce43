# wedge-toy:p1-dict
import sys


def main():
    tokens = sys.stdin.read().split()
    n = int(tokens[0])
    values = [int(t) for t in tokens[1:1 + max(n, 0)]]
    seen = {}
    pairs = 0
    for v in values:
        pairs += seen.get(v, 0)
        seen[v] = seen.get(v, 0) + 1
    print(pairs)
    sys.stderr.write("WEDGE_COST:%d\n" % (len(values) + 1))


main()
