// wedge-toy:p1-wrong
#include <cstdio>

int main() {
    int n, a[128];
    if (scanf("%d", &n) != 1) return 1;
    for (int i = 0; i < n; i++) scanf("%d", &a[i]);
    long long pairs = 0;
    for (int i = 0; i < n; i++)
        for (int j = i; j < n; j++)
            if (a[i] == a[j]) pairs++;
    printf("%lld\n", pairs);
    fprintf(stderr, "WEDGE_COST:%d\n", n);
    return 0;
}
