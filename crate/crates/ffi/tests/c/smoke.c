#include <stdio.h>
#include "shortclust.h"

int main(void) {
    size_t labels[6] = {0, 0, 0, 1, 1, 1};
    size_t clusters[6] = {1, 1, 1, 0, 0, 0};
    double ami = 0.0, acc = 0.0;
    if (sc_ami(labels, clusters, 6, &ami) != SC_STATUS_OK) return 1;
    if (sc_acc(labels, clusters, 6, &acc) != SC_STATUS_OK) return 2;
    if (ami != 1.0 || acc != 1.0) return 3;

    double cost[4] = {4.0, 1.0, 2.0, 3.0};
    size_t rows[2];
    double total = 0.0;
    if (sc_hungarian(cost, 2, 2, rows, &total) != SC_STATUS_OK) return 4;
    if (rows[0] != 1 || rows[1] != 0 || total != 3.0) return 5;

    if (sc_ami(NULL, clusters, 6, &ami) != SC_STATUS_NULL_POINTER) return 6;
    if (sc_last_error() == NULL) return 7;

    ScCorpus *corpus = NULL;
    if (sc_corpus_load("/nonexistent/corpus.tsv", NULL, &corpus) != SC_STATUS_IO) return 8;
    printf("ok %s\n", sc_last_error());
    return 0;
}
