#include <stdio.h>
#include <stdlib.h>

double dot_product(const double *a, const double *b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; i++)
        acc += a[i] * b[i];
    return acc;
}

void scale_vector(double *a, double factor, int n) {
    for (int i = 0; i < n; i++)
        a[i] *= factor;
}

unsigned long fold_bytes(const unsigned char *buf, int n) {
    unsigned long acc = 5381;
    for (int i = 0; i < n; i++)
        acc = acc * 33 + buf[i];
    return acc;
}

int clamp_index(int i, int lo, int hi) {
    if (i < lo) return lo;
    if (i > hi) return hi;
    return i;
}

int main(int argc, char **argv) {
    double xs[16], ys[16];
    for (int i = 0; i < 16; i++) {
        xs[i] = i * 0.5 + 1.0;
        ys[i] = 16.0 - i;
    }
    scale_vector(xs, argc > 1 ? atof(argv[1]) : 1.0, 16);
    printf("dot=%f fold=%lu clamp=%d\n",
           dot_product(xs, ys, 16),
           fold_bytes((const unsigned char *)argv[0], clamp_index(argc, 0, 8)),
           clamp_index(argc * 3, 0, 10));
    return 0;
}
