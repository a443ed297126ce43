// wedge-toy:p2-increment
#include <cstdio>

int main() {
    int n;
    if (scanf("%d", &n) != 1) return 1;
    long long sum = 0, steps = 0;
    for (int i = 0; i < n; i++) {
        long long x;
        if (scanf("%lld", &x) != 1) break;
        steps++;
        // counts up one at a time
        for (long long k = 0; k < x; k++) {
            sum++;
            steps++;
        }
    }
    printf("%lld\n", sum);
    fprintf(stderr, "WEDGE_COST:%lld\n", steps);
    return 0;
}
