# wedge-toy:p3-linear
import sys

a, b, c = (int(t) for t in sys.stdin.read().split()[:3])
if a <= 0 or b <= 0 or c < 0:
    sys.exit(1)
steps = 0
found = False
for x in range(c // a + 1):
    steps += 1
    if (c - a * x) % b == 0:
        found = True
        break
print("Yes" if found else "No")
sys.stderr.write("WEDGE_COST:%d\n" % steps)
