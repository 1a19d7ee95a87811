import { z } from "zod";

/** Wire types for the label service. The console holds no algorithm state:
 * everything rendered derives from these responses. */

export const pendingItemSchema = z.object({
  sample_id: z.number().int().nonnegative(),
  features: z.array(z.number()),
  projection: z.tuple([z.number(), z.number()]),
  kind: z.enum(["representative", "informative"]),
  cluster: z.number().int(),
});

export const pendingQuerySchema = z.object({
  session_id: z.string(),
  t: z.number().int().positive(),
  items: z.array(pendingItemSchema).nonempty(),
  known_classes: z.array(z.string()),
});

export const queriesResponseSchema = z.object({
  pending: pendingQuerySchema.nullable(),
});

/** Body of POST /sessions/{id}/labels: sample ids as decimal strings,
 * class identifiers non-empty. */
export const labelSubmissionSchema = z.object({
  labels: z.record(z.string().regex(/^\d+$/), z.string().min(1)),
});

export const ackSchema = z.object({
  accepted: z.number().int(),
  remaining: z.number().int(),
  complete: z.boolean(),
});

export const serviceErrorSchema = z.object({
  code: z.string(),
  message: z.string(),
  detail: z.string(),
});

export type PendingItem = z.infer<typeof pendingItemSchema>;
export type PendingQuery = z.infer<typeof pendingQuerySchema>;
export type LabelSubmission = z.infer<typeof labelSubmissionSchema>;
export type Ack = z.infer<typeof ackSchema>;
export type ServiceError = z.infer<typeof serviceErrorSchema>;
