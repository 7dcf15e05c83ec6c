/* Copyright 2026 Dompo Contributors */
/* SPDX-License-Identifier: Apache-2.0 */

/* C interface of libdompo_ffi. Handles are opaque and owned by the caller
 * until released with the matching _free function. Fallible calls return a
 * DOMPO_* code; dompo_last_error() then describes the failure (per thread,
 * valid until the next call on that thread). */

#ifndef DOMPO_H
#define DOMPO_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DOMPO_OK 0
#define DOMPO_ERR_NULL 1
#define DOMPO_ERR_UTF8 2
#define DOMPO_ERR_PARAMS 3
#define DOMPO_ERR_KEY 4
#define DOMPO_ERR_UNAVAILABLE 5
#define DOMPO_ERR_BACKEND 6
#define DOMPO_ERR_PANIC 7

#define DOMPO_BACKEND_SEMICLASSICAL 0
#define DOMPO_BACKEND_CMOP 1
#define DOMPO_BACKEND_ORACLE 2

#define DOMPO_STATUS_OK 0
#define DOMPO_STATUS_AT_THRESHOLD 1
#define DOMPO_STATUS_NOT_CONVERGED 2
#define DOMPO_STATUS_UNSTABLE_MECHANICS 3

typedef struct DompoParams DompoParams;
typedef struct DompoPoint DompoPoint;

const char *dompo_last_error(void);
const char *dompo_version(void);

/* Parameter sets. Keys: gamma0 Delta sigma x Omega eta_om eta_dc Q n_th. */
int dompo_params_parse(const char *text, DompoParams **out);
int dompo_params_headline(double delta, double x, DompoParams **out);
/* Setting Delta or x re-derives sigma; setting sigma re-derives x. */
int dompo_params_set(DompoParams *p, const char *key, double value);
int dompo_params_get(const DompoParams *p, const char *key, double *out);
void dompo_params_free(DompoParams *p);

/* A point is produced even when the physics fails; check its status. */
int dompo_evaluate(const DompoParams *p, int backend, DompoPoint **out);
/* DOMPO_STATUS_*, or -1 for a null handle. */
int dompo_point_status(const DompoPoint *pt);
/* Fields: n_s gamma_plus gamma_minus gamma n_fl n_m_rwa n_m_nonrwa a_m_re
 * a_m_im gamma_opt gamma_opt_integrated markov_ratio. Absent values give
 * DOMPO_ERR_UNAVAILABLE. */
int dompo_point_get(const DompoPoint *pt, const char *key, double *out);
/* Borrowed from the handle; NULL for a null handle. */
const char *dompo_point_json(const DompoPoint *pt);
/* Copies at most len-1 bytes plus a NUL; returns the full length. */
size_t dompo_point_json_copy(const DompoPoint *pt, char *buf, size_t len);
void dompo_point_free(DompoPoint *pt);

#ifdef __cplusplus
}
#endif

#endif
