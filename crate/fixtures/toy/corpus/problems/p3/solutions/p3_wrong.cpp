// wedge-toy:p3-wrong
#include <cstdio>

int main() {
    long long a, b, c;
    if (scanf("%lld %lld %lld", &a, &b, &c) != 3) return 1;
    puts(c % a == 0 || c % b == 0 ? "Yes" : "No");
    fprintf(stderr, "WEDGE_COST:1\n");
    return 0;
}
