/* End-to-end use of the C API: generate tasks, train, evaluate, clean up.
 *
 * Build (after `cargo build -p copath-ffi`):
 *   gcc -std=c99 -Wall -I crates/ffi/include demo.c \
 *       -L target/debug -lcopath_ffi -lm -o demo
 *   LD_LIBRARY_PATH=target/debug ./demo
 */
#include <assert.h>
#include <stdio.h>
#include <string.h>

#include "copath.h"

int main(void) {
  printf("library version %s\n", copath_version());

  double score = 0.0;
  assert(copath_rouge1("the cat sat", "a cat sat here", false, &score) ==
         COPATH_STATUS_OK);
  printf("overlap score %f\n", score);

  CopathTasks *tasks = NULL;
  assert(copath_tasks_generate(8, 2, 2, 42, 4, &tasks) == COPATH_STATUS_OK);

  CopathVectors *vectors = NULL;
  assert(copath_vectors_synth(tasks, 48, &vectors) == COPATH_STATUS_OK);

  const char *config =
      "{\"seed\": 5, \"total_steps\": 25, \"batch_size\": 2,"
      " \"embed_dim\": 48, \"hidden_dim\": 8, \"comm_input_dim\": 8,"
      " \"patience\": 0}";
  CopathModel *model = NULL;
  assert(copath_train(config, tasks, 1, vectors, &model) == COPATH_STATUS_OK);

  char *json = NULL;
  assert(copath_evaluate_json(model, tasks, vectors, 2, true, &json) ==
         COPATH_STATUS_OK);
  printf("evaluation report: %zu bytes of JSON\n", strlen(json));
  copath_string_free(json);

  CopathModel *missing = NULL;
  if (copath_model_load("/no/such/model.ckpt", &missing) != COPATH_STATUS_OK) {
    printf("expected failure: %s\n", copath_last_error_message());
  }

  copath_model_free(model);
  copath_vectors_free(vectors);
  copath_tasks_free(tasks);
  puts("done");
  return 0;
}
