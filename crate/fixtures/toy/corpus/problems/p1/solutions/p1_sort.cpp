// wedge-toy:p1-sort
#include <algorithm>
#include <cstdio>
#include <vector>

static long long steps = 0;

int main() {
    int n;
    if (scanf("%d", &n) != 1) return 1;
    std::vector<int> a;
    for (int i = 0; i < n; i++) {
        int x;
        if (scanf("%d", &x) != 1) break;
        a.push_back(x);
    }
    steps = (long long)a.size();
    std::sort(a.begin(), a.end(), [](int x, int y) { steps++; return x < y; });
    long long pairs = 0, run = 0;
    for (size_t i = 0; i < a.size(); i++) {
        run = (i > 0 && a[i] == a[i - 1]) ? run + 1 : 0;
        pairs += run;
    }
    printf("%lld\n", pairs);
    fprintf(stderr, "WEDGE_COST:%lld\n", steps);
    return 0;
}
