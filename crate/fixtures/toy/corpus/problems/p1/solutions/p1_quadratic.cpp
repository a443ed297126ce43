// wedge-toy:p1-quadratic
#include <cstdio>
#include <vector>

int main() {
    int n;
    if (scanf("%d", &n) != 1) return 1;
    std::vector<int> a;
    for (int i = 0; i < n; i++) {
        int x;
        if (scanf("%d", &x) != 1) break;
        a.push_back(x);
    }
    n = (int)a.size();
    long long pairs = 0, steps = n;
    for (int i = 0; i < n; i++) {
        for (int j = i + 1; j < n; j++) {
            steps++;
            if (a[i] == a[j]) pairs++;
        }
    }
    printf("%lld\n", pairs);
    fprintf(stderr, "WEDGE_COST:%lld\n", steps);
    return 0;
}
