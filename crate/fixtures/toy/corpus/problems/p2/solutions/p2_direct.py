# wedge-toy:p2-direct
import sys

tokens = sys.stdin.read().split()
n = int(tokens[0])
values = [int(t) for t in tokens[1:1 + max(n, 0)]]
print(sum(v for v in values if v > 0))
sys.stderr.write("WEDGE_COST:%d\n" % (len(values) + 1))
