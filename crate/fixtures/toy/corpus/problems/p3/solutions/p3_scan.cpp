// wedge-toy:p3-scan
#include <cstdio>

int main() {
    long long a, b, c;
    if (scanf("%lld %lld %lld", &a, &b, &c) != 3) return 1;
    if (a <= 0 || b <= 0 || c < 0) return 1;
    long long steps = 0;
    bool found = false;
    for (long long rest = c; rest >= 0; rest -= a) {
        steps++;
        if (rest % b == 0) {
            found = true;
            break;
        }
    }
    puts(found ? "Yes" : "No");
    fprintf(stderr, "WEDGE_COST:%lld\n", steps);
    return 0;
}
