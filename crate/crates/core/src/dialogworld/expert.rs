use super::actions::ActionSet;
use super::context::DialogContext;
use super::World;

/// Rule-based expert policy.
///
/// * user said bye → `{bye}`
/// * for every touched domain, in domain order:
///   * no database match → `nooffer`
///   * several matches and an unexpressed constraint slot → `request` the
///     first such slot (at most one request per turn overall)
///   * otherwise the entity is determined: `inform` every pending request;
///     if booking was asked for and nothing is booked, `offer` (unless a
///     valid offer stands) and `book`
/// * nothing emitted → `offer` in the current domain.
pub fn expert_respond(world: &World, ctx: &DialogContext) -> ActionSet {
    let vocab = &world.vocab;
    let mut out = ActionSet::new();
    if ctx.user_said_bye() {
        out.insert(vocab.bye());
        return out;
    }
    let mut requested = false;
    for (d, (dom, st)) in world.schema.domains.iter().zip(&ctx.domains).enumerate() {
        if !st.touched() {
            continue;
        }
        let matches = st.matches(dom).len();
        if matches == 0 {
            out.insert(vocab.nooffer(d));
            continue;
        }
        if matches > 1 {
            if let Some(slot) = st.first_unexpressed() {
                if !requested {
                    out.insert(vocab.request(d, slot));
                    requested = true;
                }
                continue;
            }
        }
        let n_inf = dom.informable.len();
        for r in st.pending_requests() {
            out.insert(vocab.inform(d, n_inf + r));
        }
        if st.booking_requested && st.booked.is_none() {
            if !st.offer_valid(dom) {
                out.insert(vocab.offer(d));
            }
            out.insert(vocab.book(d));
        }
    }
    if out.is_empty() {
        out.insert(vocab.offer(ctx.current_domain()));
    }
    out
}
