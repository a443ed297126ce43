// wedge-toy:p3-brute
#include <cstdio>

int main() {
    long long a, b, c;
    if (scanf("%lld %lld %lld", &a, &b, &c) != 3) return 1;
    if (a <= 0 || b <= 0 || c < 0) return 1;
    long long steps = 0;
    bool found = false;
    for (long long x = 0; x * a <= c && !found; x++) {
        for (long long y = 0; y * b <= c; y++) {
            steps++;
            if (a * x + b * y == c) {
                found = true;
                break;
            }
        }
    }
    puts(found ? "Yes" : "No");
    fprintf(stderr, "WEDGE_COST:%lld\n", steps);
    return 0;
}
