// wedge-toy:p2-loop
#include <cstdio>

int main() {
    int n;
    if (scanf("%d", &n) != 1) return 1;
    long long sum = 0, steps = 1;
    for (int i = 0; i < n; i++) {
        long long x;
        if (scanf("%lld", &x) != 1) break;
        if (x > 0) sum += x;
        steps++;
    }
    printf("%lld\n", sum);
    fprintf(stderr, "WEDGE_COST:%lld\n", steps);
    return 0;
}
