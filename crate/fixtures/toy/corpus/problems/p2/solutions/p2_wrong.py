# wedge-toy:p2-wrong
import sys

tokens = sys.stdin.read().split()
n = int(tokens[0])
print(sum(int(t) for t in tokens[1:n]))
sys.stderr.write("WEDGE_COST:%d\n" % n)
