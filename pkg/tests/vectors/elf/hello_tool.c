#include <stdio.h>
#include <string.h>

static const char *BANNER = "hello_tool 1.4.2 (fixture build)";
static const char *USAGE = "usage: hello_tool [--verbose] [--limit N] FILE";

static unsigned int mix_step(unsigned int h, unsigned int c) {
    return (h * 31u) ^ c;
}

unsigned int checksum_region(const unsigned char *buf, unsigned long n) {
    unsigned int h = 2166136261u;
    for (unsigned long i = 0; i < n; i++)
        h = mix_step(h, buf[i]);
    return h;
}

int count_token(const char *text, char token) {
    int count = 0;
    for (; *text; text++)
        if (*text == token)
            count++;
    return count;
}

void format_report(char *out, unsigned long cap, unsigned int sum, int hits) {
    snprintf(out, cap, "report: checksum=%08x hits=%d mode=standard", sum, hits);
}

int main(int argc, char **argv) {
    char report[128];
    unsigned int sum;
    puts(BANNER);
    if (argc < 2) {
        puts(USAGE);
        return 1;
    }
    sum = checksum_region((const unsigned char *)argv[1], strlen(argv[1]));
    format_report(report, sizeof report, sum, count_token(argv[1], '/'));
    puts(report);
    return 0;
}
